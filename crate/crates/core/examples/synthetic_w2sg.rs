//! Weak-to-strong on a synthetic Gaussian task: quarter-dimension weak
//! teachers (single and bagged) label train2, full-dimension students learn
//! from those labels.
//!
//!     cargo run --release --example synthetic_w2sg -- [trials]

use w2sg::synthetic::{run_trial, TrialConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trials: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let config = TrialConfig::default();
    println!("seed  teacher  student  | bag teacher  bag labels  bag student");
    let mut sums = [0.0; 4];
    for seed in 0..trials {
        let o = run_trial(&config, seed)?;
        println!(
            "{seed:>4}  {:.4}   {:.4}   | {:.4}       {:.4}      {:.4}",
            o.single_teacher, o.single_student, o.bagged_teacher, o.bagged_labels, o.bagged_student
        );
        for (s, v) in sums
            .iter_mut()
            .zip([o.single_teacher, o.single_student, o.bagged_teacher, o.bagged_student])
        {
            *s += v / trials as f64;
        }
    }
    println!(
        "mean  {:.4}   {:.4}   | {:.4}                   {:.4}",
        sums[0], sums[1], sums[2], sums[3]
    );
    Ok(())
}
