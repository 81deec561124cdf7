//! AdaBoost over weighted probes and gradient boosting over least-squares
//! regressors, both on a weak third of the feature dimensions. Each boosting
//! round fits on a random quarter of those dimensions; a regressor on all
//! of them would leave nothing for later rounds to fit.
//!
//!     cargo run --release --example boosting

use w2sg::dataset::Label;
use w2sg::ensemble::{train_adaboost, train_gradient_boost};
use w2sg::learners::{
    fit_least_squares, hard_targets, sample_feature_dims, train_probe_on_ids, FeatureView, LinearRegressor, ProbeConfig,
};
use w2sg::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = generate(&SyntheticConfig {
        seed: 9,
        ..Default::default()
    });
    let s = &task.splits;
    let dims = sample_feature_dims(task.features.dim(), 1.0 / 3.0, 9)?;
    let view = task.features.restrict_dims(&dims, "weak")?;
    let ids = |pairs: &[w2sg::dataset::BinaryPair]| pairs.iter().map(|p| p.id.clone()).collect::<Vec<_>>();
    let train = view.subset(&ids(&s.train1))?;
    let test = view.subset(&ids(&s.test))?;
    let labels: Vec<Label> = s.train1.iter().map(|p| p.label).collect();
    let gold = hard_targets(s.train1.iter().map(|p| (p.id.as_str(), p.label)));
    let accuracy = |votes: &[w2sg::ensemble::Vote]| {
        votes.iter().zip(&s.test).filter(|(v, p)| v.label == p.label).count() as f64 / s.test.len() as f64
    };

    let ada = train_adaboost(&train, &labels, 5, |x: &FeatureView, _, weights, round| {
        let cfg = ProbeConfig {
            epochs: 10,
            batch_size: 16,
            early_stop: false,
            seed: round as u64,
            ..Default::default()
        };
        train_probe_on_ids(x, x.ids(), &gold, Some(weights), &cfg)
    })?;
    println!("AdaBoost");
    for (t, r) in ada.rounds.iter().enumerate() {
        println!("  round {t}: weighted error {:.4}, alpha {:.4}", r.error, r.alpha);
    }
    println!("  test accuracy {:.4}", accuracy(&ada.predict(&test)?));

    println!("gradient boosting");
    for rounds in [1, 3, 10, 30] {
        let gb = train_gradient_boost(&train, &labels, rounds, 0.5, |x: &FeatureView, targets, round| {
            let sub = sample_feature_dims(x.dim(), 0.25, round as u64)?;
            let rows: Vec<Vec<f64>> = x.rows().map(|r| sub.iter().map(|&d| r[d]).collect()).collect();
            let rows: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let fit = fit_least_squares(&rows, targets, 1e-3)?;
            let mut weights = vec![0.0; x.dim()];
            for (&d, w) in sub.iter().zip(fit.weights) {
                weights[d] = w;
            }
            Ok::<_, w2sg::learners::LearnerError>(LinearRegressor {
                weights,
                intercept: fit.intercept,
            })
        })?;
        println!(
            "  {rounds:>2} rounds: test accuracy {:.4}",
            accuracy(&gb.predict(&test)?)
        );
    }
    Ok(())
}
