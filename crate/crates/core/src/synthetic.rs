//! A seeded stand-in for language-model features: two Gaussian classes in
//! `dim` dimensions. Label `y` gives `x = (2y - 1)·μ + ε` with `ε` isotropic
//! Gaussian noise and `μ` a fixed mean with `signal` magnitude per
//! dimension and random signs.
//!
//! A weak teacher sees a fraction of the dimensions and so a fraction of the
//! signal; a strong student sees all of them.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{BinaryPair, Label, SplitBundle, SplitSizes};
use crate::ensemble::{train_bagging, BaggingConfig, EnsembleError, Sampler, Voting};
use crate::learners::{
    hard_targets, predict_probe, sample_feature_dims, train_probe_on_ids, train_probe_report, FeatureView, LinearProbe,
    ProbeConfig, SoftClassifier, SoftLabel, SubspaceProbe,
};
use crate::seed;

const TOPICS: [&str; 2] = ["physics", "biology"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub signal: f64,
    pub noise: f64,
    /// Questions per split; each question yields one pair per label.
    pub sizes: SplitSizes,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dim: 64,
            signal: 0.16,
            noise: 1.0,
            sizes: SplitSizes {
                train1: 50,
                train2: 1000,
                valid: 200,
                test: 1000,
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub splits: SplitBundle,
    /// One row per pair id across all splits.
    pub features: FeatureView,
    pub mean: Vec<f64>,
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticTask {
    let mut rng = seed::keyed_rng(cfg.seed, "synthetic");
    let mean: Vec<f64> = (0..cfg.dim)
        .map(|_| if rng.gen::<bool>() { cfg.signal } else { -cfg.signal })
        .collect();
    let noise = Normal::new(0.0, cfg.noise).expect("noise must be finite and non-negative");
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut next = 0usize;
    let mut split = |count: usize, ids: &mut Vec<String>, rows: &mut Vec<Vec<f64>>| -> Vec<BinaryPair> {
        let mut pairs = Vec::with_capacity(2 * count);
        for _ in 0..count {
            let q = next;
            next += 1;
            for label in [Label::Correct, Label::Incorrect] {
                let id = format!("s{q}-{}", label.as_u8());
                let sign = label.signed();
                rows.push(mean.iter().map(|m| sign * m + noise.sample(&mut rng)).collect());
                ids.push(id.clone());
                pairs.push(BinaryPair {
                    id,
                    qid: format!("s{q}"),
                    question: format!("synthetic question {q}"),
                    answer: format!("candidate {}", label.as_u8()),
                    label,
                    topic: Some(TOPICS[q % TOPICS.len()].to_string()),
                });
            }
        }
        pairs
    };
    let splits = SplitBundle {
        train1: split(cfg.sizes.train1, &mut ids, &mut rows),
        train2: split(cfg.sizes.train2, &mut ids, &mut rows),
        valid: split(cfg.sizes.valid, &mut ids, &mut rows),
        test: split(cfg.sizes.test, &mut ids, &mut rows),
    };
    let features = FeatureView::new("synthetic", ids, rows).expect("generated rows are consistent");
    SyntheticTask { splits, features, mean }
}

/// One weak-to-strong trial: weak teachers see `proportion` of the
/// dimensions and train on train1; students see every dimension and train on
/// the teachers' soft labels for train2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub task: SyntheticConfig,
    pub proportion: f64,
    /// Bagged teachers, each on a bootstrap of train1 and its own dimensions.
    pub members: usize,
    pub teacher: ProbeConfig,
    pub student: ProbeConfig,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            task: SyntheticConfig::default(),
            proportion: 0.25,
            members: 5,
            teacher: ProbeConfig {
                epochs: 20,
                batch_size: 16,
                learning_rate: 0.1,
                early_stop: false,
                patience: 1,
                seed: 0,
            },
            student: ProbeConfig::default(),
        }
    }
}

/// Test accuracies (and train2 label accuracies) for the single-teacher and
/// bagged pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub single_teacher: f64,
    pub single_labels: f64,
    pub single_student: f64,
    pub bagged_teacher: f64,
    pub bagged_labels: f64,
    pub bagged_student: f64,
}

fn hit_rate(preds: &[SoftLabel], pairs: &[BinaryPair]) -> f64 {
    let hits = preds.iter().zip(pairs).filter(|(p, g)| p.hard() == g.label).count();
    hits as f64 / pairs.len().max(1) as f64
}

fn ids(pairs: &[BinaryPair]) -> Vec<String> {
    pairs.iter().map(|p| p.id.clone()).collect()
}

/// Trains a student on `labeler`'s soft labels, early-stopped on the same
/// labeler's validation labels, and returns its test accuracy.
fn student_accuracy(
    task: &SyntheticTask,
    labels2: &[SoftLabel],
    labels_valid: &[SoftLabel],
    config: &ProbeConfig,
) -> Result<f64, EnsembleError> {
    let s = &task.splits;
    let targets: HashMap<String, SoftLabel> = ids(&s.train2).into_iter().zip(labels2.iter().copied()).collect();
    let valid: HashMap<String, SoftLabel> = ids(&s.valid).into_iter().zip(labels_valid.iter().copied()).collect();
    let train = task.features.subset(&ids(&s.train2))?;
    let valid_view = task.features.subset(&ids(&s.valid))?;
    let fit = train_probe_report(&train, &targets, config, Some((&valid_view, &valid)))?;
    Ok(hit_rate(
        &predict_probe(&fit.probe, &task.features.subset(&ids(&s.test))?)?,
        &s.test,
    ))
}

pub fn run_trial(config: &TrialConfig, trial_seed: u64) -> Result<TrialOutcome, EnsembleError> {
    let task = generate(&SyntheticConfig {
        seed: trial_seed,
        ..config.task.clone()
    });
    let s = &task.splits;
    let train1 = task.features.subset(&ids(&s.train1))?;
    let views = [&s.train2, &s.valid, &s.test].map(|split| task.features.subset(&ids(split)));
    let [train2, valid, test] = views;
    let (train2, valid, test) = (train2?, valid?, test?);
    let gold = hard_targets(s.train1.iter().map(|p| (p.id.as_str(), p.label)));
    let teacher = |ids: &[String], seed: u64| -> Result<SubspaceProbe, EnsembleError> {
        let dims = sample_feature_dims(task.features.dim(), config.proportion, seed::derive(seed, "dims"))?;
        let view = train1.restrict_dims(&dims, "teacher")?;
        let cfg = ProbeConfig {
            seed,
            ..config.teacher.clone()
        };
        let probe: LinearProbe = train_probe_on_ids(&view, ids, &gold, None, &cfg)?;
        Ok(SubspaceProbe { dims, probe })
    };

    let single = teacher(train1.ids(), seed::derive(trial_seed, "single"))?;
    let single_labels = single.predict_soft(&train2)?;
    let single_valid = single.predict_soft(&valid)?;

    let items: Vec<(String, Label)> = s.train1.iter().map(|p| (p.id.clone(), p.label)).collect();
    let bag = train_bagging(
        &items,
        &BaggingConfig {
            sampler: Sampler::Bootstrap { n: items.len() },
            num_models: config.members,
            voting: Voting::Soft,
            base_seed: seed::derive(trial_seed, "bagging"),
        },
        |sample| teacher(&sample.in_bag, sample.seed),
    )?;
    let soft = |view: &FeatureView| -> Result<Vec<SoftLabel>, EnsembleError> {
        Ok(bag.predict(view)?.into_iter().map(|v| v.soft).collect())
    };
    let bagged_labels = soft(&train2)?;
    let bagged_valid = soft(&valid)?;

    let student = ProbeConfig {
        seed: seed::derive(trial_seed, "student"),
        ..config.student.clone()
    };
    Ok(TrialOutcome {
        single_teacher: hit_rate(&single.predict_soft(&test)?, &s.test),
        single_labels: hit_rate(&single_labels, &s.train2),
        single_student: student_accuracy(&task, &single_labels, &single_valid, &student)?,
        bagged_teacher: hit_rate(&soft(&test)?, &s.test),
        bagged_labels: hit_rate(&bagged_labels, &s.train2),
        bagged_student: student_accuracy(&task, &bagged_labels, &bagged_valid, &student)?,
    })
}
