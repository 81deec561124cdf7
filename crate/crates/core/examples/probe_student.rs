//! A weak probe trained on gold labels over a quarter of the feature
//! dimensions supervises a strong probe that sees all of them.
//!
//!     cargo run --release --example probe_student -- [seed]

use std::collections::HashMap;

use w2sg::learners::{hard_targets, predict_probe, sample_feature_dims, train_probe_report, ProbeConfig, SoftLabel};
use w2sg::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let task = generate(&SyntheticConfig {
        seed,
        ..Default::default()
    });
    let s = &task.splits;
    let ids = |pairs: &[w2sg::dataset::BinaryPair]| pairs.iter().map(|p| p.id.clone()).collect::<Vec<_>>();
    let hit_rate = |preds: &[SoftLabel], pairs: &[w2sg::dataset::BinaryPair]| {
        preds.iter().zip(pairs).filter(|(p, g)| p.hard() == g.label).count() as f64 / pairs.len() as f64
    };

    let dims = sample_feature_dims(task.features.dim(), 0.25, seed)?;
    let weak_view = task.features.restrict_dims(&dims, "weak")?;
    let teacher_cfg = ProbeConfig {
        epochs: 20,
        batch_size: 16,
        early_stop: false,
        seed,
        ..Default::default()
    };
    let gold1 = hard_targets(s.train1.iter().map(|p| (p.id.as_str(), p.label)));
    let teacher = train_probe_report(&weak_view.subset(&ids(&s.train1))?, &gold1, &teacher_cfg, None)?.probe;
    let weak_labels = |pairs| predict_probe(&teacher, &weak_view.subset(&ids(pairs))?);
    let (labels2, labels_valid, weak_test) = (weak_labels(&s.train2)?, weak_labels(&s.valid)?, weak_labels(&s.test)?);

    let targets: HashMap<String, SoftLabel> = ids(&s.train2).into_iter().zip(labels2.iter().copied()).collect();
    let valid: HashMap<String, SoftLabel> = ids(&s.valid).into_iter().zip(labels_valid).collect();
    let student_cfg = ProbeConfig {
        seed,
        ..Default::default()
    };
    let fit = train_probe_report(
        &task.features.subset(&ids(&s.train2))?,
        &targets,
        &student_cfg,
        Some((&task.features.subset(&ids(&s.valid))?, &valid)),
    )?;
    let strong_test = predict_probe(&fit.probe, &task.features.subset(&ids(&s.test))?)?;

    let gold2 = hard_targets(s.train2.iter().map(|p| (p.id.as_str(), p.label)));
    let oracle = train_probe_report(&task.features.subset(&ids(&s.train2))?, &gold2, &student_cfg, None)?.probe;
    let oracle_test = predict_probe(&oracle, &task.features.subset(&ids(&s.test))?)?;

    println!("weak label accuracy on train2  {:.4}", hit_rate(&labels2, &s.train2));
    println!("weak teacher test accuracy     {:.4}", hit_rate(&weak_test, &s.test));
    println!(
        "weak-to-strong student         {:.4}  (best epoch {})",
        hit_rate(&strong_test, &s.test),
        fit.best_epoch
    );
    println!("student on gold labels         {:.4}", hit_rate(&oracle_test, &s.test));
    Ok(())
}
