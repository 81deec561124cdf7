//! Debate oversight: two auxiliary agents argue that an answer is correct
//! and incorrect for a few rounds, then the weak model judges with both
//! final arguments in context. Runs offline against a rule-based model.
//!
//!     cargo run --example debate_oversight

#[path = "support/mod.rs"]
mod support;

use w2sg::oversight::{run_debate, DebateDemos, SoConfig};
use w2sg::templates::TemplateSet;

use support::{quiz_pairs, QuizModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pairs = quiz_pairs();
    let weak = QuizModel::new("weak", 0.4);
    let agent_a = QuizModel::new("agent-a", 0.2);
    let agent_b = QuizModel::new("agent-b", 0.2);
    let cfg = SoConfig {
        rounds: 2,
        judge_every_round: true,
        seed: 1,
        ..Default::default()
    };
    let outcome = run_debate(
        &pairs,
        &cfg,
        &agent_a,
        &agent_b,
        &weak,
        &TemplateSet::default(),
        &DebateDemos::default(),
        1,
    )?;
    for t in outcome.transcripts.iter().take(2) {
        println!("{}", t.pair_id);
        for (i, (a, b)) in t.rounds.iter().enumerate() {
            println!("  round {}: for: {a}\n           against: {b}", i + 1);
        }
        println!("  judgements per round: {:?}", t.judgements);
    }
    let hits = outcome
        .records
        .iter()
        .filter(|r| r.extracted == Some(r.pair.label))
        .count();
    println!("\njudged correctly after debate: {hits}/{}", outcome.records.len());
    Ok(())
}
