//! Feature-dimension bagging: each member sees its own bootstrap of train1
//! and its own random quarter of the dimensions. More members, better
//! weak labels.
//!
//!     cargo run --release --example bagging

use w2sg::dataset::Label;
use w2sg::ensemble::{train_bagging, BaggingConfig, Sampler, Voting};
use w2sg::learners::{hard_targets, sample_feature_dims, train_probe_on_ids, ProbeConfig, SubspaceProbe};
use w2sg::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = generate(&SyntheticConfig {
        seed: 3,
        ..Default::default()
    });
    let s = &task.splits;
    let items: Vec<(String, Label)> = s.train1.iter().map(|p| (p.id.clone(), p.label)).collect();
    let gold = hard_targets(s.train1.iter().map(|p| (p.id.as_str(), p.label)));
    let test_ids: Vec<String> = s.test.iter().map(|p| p.id.clone()).collect();
    let test = task.features.subset(&test_ids)?;
    let probe_cfg = ProbeConfig {
        epochs: 20,
        batch_size: 16,
        early_stop: false,
        ..Default::default()
    };

    println!("members  hard vote  soft vote");
    for members in [1, 3, 5, 9, 15] {
        let mut row = Vec::new();
        for voting in [Voting::Hard, Voting::Soft] {
            let config = BaggingConfig {
                sampler: Sampler::Bootstrap { n: items.len() },
                num_models: members,
                voting,
                base_seed: 3,
            };
            let model = train_bagging(
                &items,
                &config,
                |sample| -> Result<SubspaceProbe, Box<dyn std::error::Error + Send + Sync>> {
                    let dims = sample_feature_dims(task.features.dim(), 0.25, sample.seed)?;
                    let view = task.features.restrict_dims(&dims, "member")?;
                    let cfg = ProbeConfig {
                        seed: sample.seed,
                        ..probe_cfg.clone()
                    };
                    let probe = train_probe_on_ids(&view, &sample.in_bag, &gold, None, &cfg)?;
                    Ok(SubspaceProbe { dims, probe })
                },
            )?;
            let votes = model.predict(&test)?;
            let hits = votes.iter().zip(&s.test).filter(|(v, p)| v.label == p.label).count();
            row.push(hits as f64 / s.test.len() as f64);
        }
        println!("{members:>7}  {:.4}     {:.4}", row[0], row[1]);
    }
    Ok(())
}
