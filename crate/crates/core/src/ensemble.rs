//! Training-set samplers, voting rules, bagging, AdaBoost and gradient
//! boosting over generic weak learners.
//!
//! Labels are `{0,1}` at every public boundary. AdaBoost maps them onto
//! `{-1,+1}` internally. Every tie (a split vote, a zero AdaBoost margin,
//! equal class probabilities) resolves to label 0.

use std::error::Error as StdError;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;
use crate::learners::{FeatureView, LearnerError, LinearRegressor, SoftClassifier, SoftLabel};
use crate::seed;

/// AdaBoost clamps the weighted error into `[ε, 1-ε]` so a perfect or
/// perfectly wrong learner still gets a finite weight.
pub const ADABOOST_ERROR_CLAMP: f64 = 1e-6;

pub const DEFAULT_SHRINKAGE: f64 = 0.1;

type BoxError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("cannot sample from an empty id list")]
    EmptyIds,
    #[error("sample size must be at least 1")]
    ZeroSampleSize,
    #[error("cannot select {requested} of {available} items")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("infeasible class-balanced sample: {0}")]
    InfeasibleBalance(String),
    #[error("cannot vote over zero members")]
    EmptyVote,
    #[error("invalid ensemble config: {0}")]
    InvalidConfig(String),
    #[error("member {index} failed: {source}")]
    Member {
        index: usize,
        #[source]
        source: BoxError,
    },
    #[error("boosting round {round} failed: {source}")]
    Round {
        round: usize,
        #[source]
        source: BoxError,
    },
    #[error("member predictions have different lengths ({0} vs {1})")]
    RaggedPredictions(usize, usize),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// Draws `n` ids with replacement. Ids never drawn form the out-of-bag set,
/// returned in input order.
pub fn bootstrap_sample<T: Clone>(ids: &[T], n: usize, seed: u64) -> Result<(Vec<T>, Vec<T>), EnsembleError> {
    if ids.is_empty() {
        return Err(EnsembleError::EmptyIds);
    }
    if n == 0 {
        return Err(EnsembleError::ZeroSampleSize);
    }
    let mut rng = seed::rng(seed);
    let mut drawn = vec![false; ids.len()];
    let mut in_bag = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.gen_range(0..ids.len());
        drawn[i] = true;
        in_bag.push(ids[i].clone());
    }
    let out_of_bag = ids
        .iter()
        .zip(&drawn)
        .filter(|(_, &d)| !d)
        .map(|(id, _)| id.clone())
        .collect();
    Ok((in_bag, out_of_bag))
}

/// Uniform sample of `n` items without replacement; the rest keep input
/// order. With `class_balanced`, exactly `n/2` items come from each label.
pub fn random_subset<T: Clone>(
    items: &[(T, Label)],
    n: usize,
    class_balanced: bool,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), EnsembleError> {
    if n > items.len() {
        return Err(EnsembleError::SubsetTooLarge {
            requested: n,
            available: items.len(),
        });
    }
    let mut rng = seed::rng(seed);
    let chosen: Vec<usize> = if class_balanced {
        if !n.is_multiple_of(2) {
            return Err(EnsembleError::InfeasibleBalance(format!("odd sample size {n}")));
        }
        let mut picked = Vec::with_capacity(n);
        for label in [Label::Incorrect, Label::Correct] {
            let members: Vec<usize> = (0..items.len()).filter(|&i| items[i].1 == label).collect();
            if members.len() < n / 2 {
                return Err(EnsembleError::InfeasibleBalance(format!(
                    "label {label} has {} items, {} needed",
                    members.len(),
                    n / 2
                )));
            }
            picked.extend(
                rand::seq::index::sample(&mut rng, members.len(), n / 2)
                    .into_iter()
                    .map(|k| members[k]),
            );
        }
        picked.shuffle(&mut rng);
        picked
    } else {
        rand::seq::index::sample(&mut rng, items.len(), n).into_vec()
    };
    let mut taken = vec![false; items.len()];
    for &i in &chosen {
        taken[i] = true;
    }
    let selected = chosen.iter().map(|&i| items[i].0.clone()).collect();
    let rest = items
        .iter()
        .zip(&taken)
        .filter(|(_, &t)| !t)
        .map(|(it, _)| it.0.clone())
        .collect();
    Ok((selected, rest))
}

/// Majority label; an exact tie gives 0.
pub fn hard_vote(labels: &[Label]) -> Result<Label, EnsembleError> {
    if labels.is_empty() {
        return Err(EnsembleError::EmptyVote);
    }
    let ones = labels.iter().filter(|&&l| l == Label::Correct).count();
    Ok(if 2 * ones > labels.len() {
        Label::Correct
    } else {
        Label::Incorrect
    })
}

/// Per-class arithmetic mean and its argmax (tie gives 0).
pub fn soft_vote(dists: &[SoftLabel]) -> Result<(SoftLabel, Label), EnsembleError> {
    if dists.is_empty() {
        return Err(EnsembleError::EmptyVote);
    }
    let n = dists.len() as f64;
    let mean = SoftLabel {
        p0: dists.iter().map(|d| d.p0).sum::<f64>() / n,
        p1: dists.iter().map(|d| d.p1).sum::<f64>() / n,
    };
    Ok((mean, mean.hard()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Voting {
    Hard,
    Soft,
}

/// How each bagging member's training ids are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sampler {
    RandomSubset {
        n: usize,
        class_balanced: bool,
    },
    Bootstrap {
        n: usize,
    },
    /// Every member sees all ids; diversity comes from the factory, e.g.
    /// sampled feature dimensions or a different hidden layer.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggingConfig {
    pub sampler: Sampler,
    pub num_models: usize,
    pub voting: Voting,
    pub base_seed: u64,
}

impl BaggingConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.num_models < 1 {
            return Err(EnsembleError::InvalidConfig("num_models must be >= 1".into()));
        }
        match self.sampler {
            Sampler::RandomSubset { n: 0, .. } | Sampler::Bootstrap { n: 0 } => {
                Err(EnsembleError::InvalidConfig("sample size must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn member_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

/// What the factory receives for one bagging member.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberSample {
    pub index: usize,
    pub seed: u64,
    /// Training ids; may contain duplicates under bootstrap sampling.
    pub in_bag: Vec<String>,
    pub out_of_bag: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BagMember<L> {
    pub seed: u64,
    pub learner: L,
    pub out_of_bag: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaggedEnsemble<L> {
    pub members: Vec<BagMember<L>>,
    pub voting: Voting,
}

/// Combined ensemble output for one example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vote {
    /// Mean distribution under soft voting, vote fractions under hard voting.
    pub soft: SoftLabel,
    pub label: Label,
}

/// Combines per-member predictions (`member_preds[m][i]`) example by example.
pub fn combine(member_preds: &[Vec<SoftLabel>], voting: Voting) -> Result<Vec<Vote>, EnsembleError> {
    let first = member_preds.first().ok_or(EnsembleError::EmptyVote)?;
    if let Some(bad) = member_preds.iter().find(|p| p.len() != first.len()) {
        return Err(EnsembleError::RaggedPredictions(first.len(), bad.len()));
    }
    let mut out = Vec::with_capacity(first.len());
    let mut column = Vec::with_capacity(member_preds.len());
    for i in 0..first.len() {
        column.clear();
        column.extend(member_preds.iter().map(|p| p[i]));
        let vote = match voting {
            Voting::Soft => {
                let (soft, label) = soft_vote(&column)?;
                Vote { soft, label }
            }
            Voting::Hard => {
                let labels: Vec<Label> = column.iter().map(SoftLabel::hard).collect();
                let ones = labels.iter().filter(|&&l| l == Label::Correct).count();
                Vote {
                    soft: SoftLabel::from_p1(ones as f64 / labels.len() as f64),
                    label: hard_vote(&labels)?,
                }
            }
        };
        out.push(vote);
    }
    Ok(out)
}

impl<L> BaggedEnsemble<L> {
    pub fn predict<X: ?Sized + Sync>(&self, input: &X) -> Result<Vec<Vote>, EnsembleError>
    where
        L: SoftClassifier<X> + Sync,
    {
        let preds: Vec<Result<Vec<SoftLabel>, LearnerError>> =
            self.members.par_iter().map(|m| m.learner.predict_soft(input)).collect();
        let preds = preds
            .into_iter()
            .enumerate()
            .map(|(index, p)| {
                p.map_err(|e| EnsembleError::Member {
                    index,
                    source: e.into(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        combine(&preds, self.voting)
    }
}

/// Draws the training sample for member `index`.
pub fn member_sample(
    items: &[(String, Label)],
    config: &BaggingConfig,
    index: usize,
) -> Result<MemberSample, EnsembleError> {
    let seed = config.member_seed(index);
    let (in_bag, out_of_bag) = match config.sampler {
        Sampler::Bootstrap { n } => {
            let ids: Vec<String> = items.iter().map(|(id, _)| id.clone()).collect();
            bootstrap_sample(&ids, n, seed)?
        }
        Sampler::RandomSubset { n, class_balanced } => random_subset(items, n, class_balanced, seed)?,
        Sampler::Full => (items.iter().map(|(id, _)| id.clone()).collect(), Vec::new()),
    };
    Ok(MemberSample {
        index,
        seed,
        in_bag,
        out_of_bag,
    })
}

/// Trains `num_models` members, member `i` on its sampler output with seed
/// `base_seed + i`. Members train in parallel; results are assembled in
/// member order and depend only on each member's own seed.
pub fn train_bagging<L, F, E>(
    items: &[(String, Label)],
    config: &BaggingConfig,
    factory: F,
) -> Result<BaggedEnsemble<L>, EnsembleError>
where
    L: Send,
    F: Fn(&MemberSample) -> Result<L, E> + Sync,
    E: Into<BoxError>,
{
    config.validate()?;
    let results: Vec<Result<BagMember<L>, EnsembleError>> = (0..config.num_models)
        .into_par_iter()
        .map(|index| {
            let sample = member_sample(items, config, index).map_err(|e| EnsembleError::Member {
                index,
                source: e.into(),
            })?;
            let learner = factory(&sample).map_err(|e| EnsembleError::Member {
                index,
                source: e.into(),
            })?;
            Ok(BagMember {
                seed: sample.seed,
                learner,
                out_of_bag: sample.out_of_bag,
            })
        })
        .collect();
    Ok(BaggedEnsemble {
        members: results.into_iter().collect::<Result<_, _>>()?,
        voting: config.voting,
    })
}

/// Result of one AdaBoost reweighting step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaBoostStep {
    /// Weighted error after clamping.
    pub error: f64,
    pub alpha: f64,
    pub normalizer: f64,
    pub next_weights: Vec<f64>,
}

/// One AdaBoost update given the current weights and which samples the
/// round's learner got wrong.
///
/// The error is computed on normalised weights and clamped to
/// `[ε, 1-ε]`; then `α = ½·ln((1-e)/e)`, `Z = 2·sqrt(e(1-e))` and
/// `W'(i) = W(i)·exp(-α·y_i·h(x_i)) / Z`, where `y_i·h(x_i)` is `-1` on a
/// mistake and `+1` otherwise.
pub fn adaboost_step(weights: &[f64], mistakes: &[bool]) -> AdaBoostStep {
    assert_eq!(weights.len(), mistakes.len());
    let total: f64 = weights.iter().sum();
    let wrong: f64 = weights.iter().zip(mistakes).filter(|(_, &m)| m).map(|(w, _)| w).sum();
    let error = (wrong / total).clamp(ADABOOST_ERROR_CLAMP, 1.0 - ADABOOST_ERROR_CLAMP);
    let alpha = 0.5 * ((1.0 - error) / error).ln();
    let normalizer = 2.0 * (error * (1.0 - error)).sqrt();
    let next_weights = weights
        .iter()
        .zip(mistakes)
        .map(|(w, &m)| {
            let agreement = if m { -1.0 } else { 1.0 };
            w * (-alpha * agreement).exp() / normalizer
        })
        .collect();
    AdaBoostStep {
        error,
        alpha,
        normalizer,
        next_weights,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostRound<L> {
    pub learner: L,
    pub alpha: f64,
    pub error: f64,
    pub normalizer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaBoostModel<L> {
    pub rounds: Vec<AdaBoostRound<L>>,
    /// Sample weights `W_0 … W_T` seen during training.
    pub weight_history: Vec<Vec<f64>>,
}

impl<L> AdaBoostModel<L> {
    pub fn alphas(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.alpha).collect()
    }

    /// `Σ α_t·h_t(x)` with `h_t ∈ {-1,+1}`.
    pub fn margins<X: ?Sized>(&self, input: &X) -> Result<Vec<f64>, EnsembleError>
    where
        L: SoftClassifier<X>,
    {
        let mut margins: Option<Vec<f64>> = None;
        for (round, r) in self.rounds.iter().enumerate() {
            let labels = r.learner.predict_hard(input).map_err(|e| EnsembleError::Round {
                round,
                source: e.into(),
            })?;
            let acc = margins.get_or_insert_with(|| vec![0.0; labels.len()]);
            for (m, l) in acc.iter_mut().zip(&labels) {
                *m += r.alpha * l.signed();
            }
        }
        Ok(margins.unwrap_or_default())
    }

    /// Sign of the margin (zero gives label 0); the soft output is
    /// `sigmoid(2·margin)`.
    pub fn predict<X: ?Sized>(&self, input: &X) -> Result<Vec<Vote>, EnsembleError>
    where
        L: SoftClassifier<X>,
    {
        Ok(self
            .margins(input)?
            .into_iter()
            .map(|m| Vote {
                soft: SoftLabel::from_p1(crate::learners::sigmoid(2.0 * m)),
                label: if m > 0.0 { Label::Correct } else { Label::Incorrect },
            })
            .collect())
    }
}

/// AdaBoost with initial weights `W_0(i) = 1`.
///
/// `factory(examples, labels, weights, round)` trains the round's learner on
/// the weighted set.
pub fn train_adaboost<X, L, F, E>(
    examples: &X,
    labels: &[Label],
    rounds: usize,
    mut factory: F,
) -> Result<AdaBoostModel<L>, EnsembleError>
where
    X: ?Sized,
    L: SoftClassifier<X>,
    F: FnMut(&X, &[Label], &[f64], usize) -> Result<L, E>,
    E: Into<BoxError>,
{
    if rounds < 1 {
        return Err(EnsembleError::InvalidConfig("AdaBoost needs at least one round".into()));
    }
    let mut weights = vec![1.0; labels.len()];
    let mut history = vec![weights.clone()];
    let mut out = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let learner = factory(examples, labels, &weights, round).map_err(|e| EnsembleError::Round {
            round,
            source: e.into(),
        })?;
        let predicted = learner.predict_hard(examples).map_err(|e| EnsembleError::Round {
            round,
            source: e.into(),
        })?;
        if predicted.len() != labels.len() {
            return Err(EnsembleError::RaggedPredictions(labels.len(), predicted.len()));
        }
        let mistakes: Vec<bool> = predicted.iter().zip(labels).map(|(p, y)| p != y).collect();
        let step = adaboost_step(&weights, &mistakes);
        weights = step.next_weights;
        history.push(weights.clone());
        out.push(AdaBoostRound {
            learner,
            alpha: step.alpha,
            error: step.error,
            normalizer: step.normalizer,
        });
    }
    Ok(AdaBoostModel {
        rounds: out,
        weight_history: history,
    })
}

/// Real-valued predictions, the base learner interface for gradient boosting.
pub trait Regressor<X: ?Sized> {
    fn predict_values(&self, input: &X) -> Result<Vec<f64>, LearnerError>;
}

impl Regressor<FeatureView> for LinearRegressor {
    fn predict_values(&self, input: &FeatureView) -> Result<Vec<f64>, LearnerError> {
        self.predict(input)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradBoostModel<R> {
    pub initial: R,
    pub rounds: Vec<R>,
    pub shrinkage: f64,
    /// Training mean-squared error of `F_1 … F_T`.
    pub mse_history: Vec<f64>,
}

impl<R> GradBoostModel<R> {
    /// `F(x) = H_1(x) + v·Σ_{t≥2} H_t(x)`.
    pub fn scores<X: ?Sized>(&self, input: &X) -> Result<Vec<f64>, EnsembleError>
    where
        R: Regressor<X>,
    {
        let mut f = self.initial.predict_values(input)?;
        for (round, h) in self.rounds.iter().enumerate() {
            let values = h.predict_values(input).map_err(|e| EnsembleError::Round {
                round: round + 1,
                source: e.into(),
            })?;
            for (fi, hi) in f.iter_mut().zip(values) {
                *fi += self.shrinkage * hi;
            }
        }
        Ok(f)
    }

    /// Label 1 when `F(x) ≥ 0.5`; the soft output is `F` clipped to [0, 1].
    pub fn predict<X: ?Sized>(&self, input: &X) -> Result<Vec<Vote>, EnsembleError>
    where
        R: Regressor<X>,
    {
        Ok(self
            .scores(input)?
            .into_iter()
            .map(|f| Vote {
                soft: SoftLabel::from_p1(f.clamp(0.0, 1.0)),
                label: if f >= 0.5 { Label::Correct } else { Label::Incorrect },
            })
            .collect())
    }
}

fn mse(targets: &[f64], fitted: &[f64]) -> f64 {
    targets.iter().zip(fitted).map(|(y, f)| (y - f).powi(2)).sum::<f64>() / targets.len().max(1) as f64
}

/// Gradient boosting on squared loss.
///
/// `F_1 = H_1` fitted to the labels; each later `H_t` is fitted to the
/// pseudo-residuals `y - F_{t-1}(x)` and `F_t = F_{t-1} + v·H_t`.
/// `factory(examples, targets, round)` fits a least-squares regressor.
pub fn train_gradient_boost<X, R, F, E>(
    examples: &X,
    labels: &[Label],
    rounds: usize,
    shrinkage: f64,
    mut factory: F,
) -> Result<GradBoostModel<R>, EnsembleError>
where
    X: ?Sized,
    R: Regressor<X>,
    F: FnMut(&X, &[f64], usize) -> Result<R, E>,
    E: Into<BoxError>,
{
    if rounds < 1 {
        return Err(EnsembleError::InvalidConfig(
            "gradient boosting needs at least one round".into(),
        ));
    }
    if !(shrinkage > 0.0 && shrinkage <= 1.0) {
        return Err(EnsembleError::InvalidConfig(format!(
            "shrinkage must lie in (0, 1], got {shrinkage}"
        )));
    }
    let y: Vec<f64> = labels.iter().map(|l| l.as_u8() as f64).collect();
    let fit_round = |factory: &mut F, targets: &[f64], round: usize| -> Result<(R, Vec<f64>), EnsembleError> {
        let wrap = |e: BoxError| EnsembleError::Round { round, source: e };
        let h = factory(examples, targets, round).map_err(|e| wrap(e.into()))?;
        let values = h.predict_values(examples).map_err(|e| wrap(e.into()))?;
        if values.len() != targets.len() {
            return Err(EnsembleError::RaggedPredictions(targets.len(), values.len()));
        }
        Ok((h, values))
    };

    let (initial, mut fitted) = fit_round(&mut factory, &y, 0)?;
    let mut mse_history = vec![mse(&y, &fitted)];
    let mut out = Vec::with_capacity(rounds - 1);
    for round in 1..rounds {
        let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(yi, fi)| yi - fi).collect();
        let (h, values) = fit_round(&mut factory, &residuals, round)?;
        for (fi, hi) in fitted.iter_mut().zip(values) {
            *fi += shrinkage * hi;
        }
        mse_history.push(mse(&y, &fitted));
        out.push(h);
    }
    Ok(GradBoostModel {
        initial,
        rounds: out,
        shrinkage,
        mse_history,
    })
}

/// Serialized description of a trained ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub method: String,
    pub config: serde_json::Value,
    pub members: Vec<ManifestMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub index: usize,
    pub seed: u64,
    pub params_file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashSet;

    use Label::{Correct as L1, Incorrect as L0};

    #[test]
    fn bootstrap_single_element() {
        let (bag, oob) = bootstrap_sample(&["a"], 3, 1).unwrap();
        assert_eq!(bag, vec!["a", "a", "a"]);
        assert!(oob.is_empty());
    }

    #[test]
    fn bootstrap_is_deterministic_and_partitions() {
        let ids: Vec<u32> = (0..50).collect();
        let a = bootstrap_sample(&ids, 50, 11).unwrap();
        assert_eq!(a, bootstrap_sample(&ids, 50, 11).unwrap());
        let drawn: HashSet<_> = a.0.iter().collect();
        for id in &ids {
            assert!(drawn.contains(id) != a.1.contains(id));
        }
    }

    #[test]
    fn bootstrap_rejects_empty() {
        assert!(matches!(
            bootstrap_sample::<u8>(&[], 3, 0),
            Err(EnsembleError::EmptyIds)
        ));
    }

    #[test]
    fn subset_of_everything() {
        let items: Vec<(u32, Label)> = (0..10).map(|i| (i, if i % 2 == 0 { L0 } else { L1 })).collect();
        let (sel, rest) = random_subset(&items, 10, false, 3).unwrap();
        assert_eq!(sel.len(), 10);
        assert!(rest.is_empty());
    }

    #[test]
    fn balanced_subset_counts() {
        let items: Vec<(u32, Label)> = (0..10_000).map(|i| (i, if i < 5000 { L0 } else { L1 })).collect();
        let (sel, rest) = random_subset(&items, 4000, true, 8).unwrap();
        assert_eq!(sel.iter().filter(|&&i| i < 5000).count(), 2000);
        assert_eq!(rest.len(), 6000);
        let all: HashSet<_> = sel.iter().chain(&rest).collect();
        assert_eq!(all.len(), 10_000);
    }

    #[test]
    fn infeasible_balance() {
        let items = vec![(0, L0), (1, L0), (2, L0), (3, L1)];
        assert!(matches!(
            random_subset(&items, 4, true, 0),
            Err(EnsembleError::InfeasibleBalance(_))
        ));
        assert!(matches!(
            random_subset(&items, 3, true, 0),
            Err(EnsembleError::InfeasibleBalance(_))
        ));
    }

    #[test]
    fn vote_examples() {
        assert_eq!(hard_vote(&[L1, L1, L0]).unwrap(), L1);
        assert_eq!(hard_vote(&[L1, L0]).unwrap(), L0);
        assert_eq!(hard_vote(&[L0, L0, L0, L1]).unwrap(), L0);
        assert!(hard_vote(&[]).is_err());

        let (mean, label) = soft_vote(&[
            SoftLabel::from_p1(0.4),
            SoftLabel::from_p1(0.7),
            SoftLabel::from_p1(0.6),
        ])
        .unwrap();
        assert_relative_eq!(mean.p0, 1.3 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(mean.p1, 1.7 / 3.0, epsilon = 1e-12);
        assert_eq!(label, L1);
        assert_eq!(soft_vote(&[SoftLabel::from_p1(0.5)]).unwrap().1, L0);
    }

    #[test]
    fn adaboost_half_error_is_neutral() {
        let step = adaboost_step(&[1.0, 1.0, 1.0, 1.0], &[true, false, true, false]);
        assert_eq!(step.alpha, 0.0);
        assert_eq!(step.normalizer, 1.0);
        assert_eq!(step.next_weights, vec![1.0; 4]);
    }

    #[test]
    fn adaboost_quarter_error() {
        let step = adaboost_step(&[1.0; 4], &[false, false, true, false]);
        assert_relative_eq!(step.alpha, 0.5 * 3f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(step.normalizer, 2.0 * 0.1875f64.sqrt(), epsilon = 1e-15);
        assert!(step.next_weights[2] > step.next_weights[0]);
    }

    #[test]
    fn gradient_boost_rejects_bad_shrinkage() {
        let view = FeatureView::new("s", vec!["a".into()], vec![vec![0.0]]).unwrap();
        let fit =
            |v: &FeatureView, t: &[f64], _| crate::learners::fit_least_squares(&v.rows().collect::<Vec<_>>(), t, 0.0);
        assert!(train_gradient_boost(&view, &[L1], 2, 0.0, fit).is_err());
        assert!(train_gradient_boost(&view, &[L1], 2, 1.5, fit).is_err());
        assert!(train_gradient_boost(&view, &[L1], 0, 0.1, fit).is_err());
    }

    #[test]
    fn combine_rejects_ragged() {
        let preds = vec![vec![SoftLabel::from_p1(0.2)], vec![]];
        assert!(matches!(
            combine(&preds, Voting::Soft),
            Err(EnsembleError::RaggedPredictions(1, 0))
        ));
    }
}
