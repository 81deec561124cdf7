//! Interaction oversight: the weak model writes background notes for a few
//! questions, a stronger auxiliary model uses them as demonstrations to
//! write knowledge for each pair, and the weak model judges the pair with
//! that knowledge in context. Runs offline against a rule-based model.
//!
//!     cargo run --example interaction_oversight

#[path = "support/mod.rs"]
mod support;

use w2sg::oversight::{extract_label, generate_context_examples, interaction_annotate, SoConfig};
use w2sg::templates::TemplateSet;

use support::{quiz_pairs, QuizModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pairs = quiz_pairs();
    let weak = QuizModel::new("weak", 0.4);
    let aux = QuizModel::new("aux", 0.0);
    let templates = TemplateSet::default();
    let cfg = SoConfig {
        m: 6,
        n: 2,
        seed: 1,
        ..Default::default()
    };

    let examples = generate_context_examples(&pairs, &weak, &templates, &cfg)?;
    println!("context examples written by the weak model:");
    for e in &examples {
        println!("  {}: {}", e.qid, e.knowledge);
    }
    let records = interaction_annotate(&pairs, &examples, &cfg, &aux, &weak, &templates, 1)?;
    let hits = records.iter().filter(|r| r.extracted == Some(r.pair.label)).count();

    // Baseline: the weak model judging without any context.
    let unaided = pairs
        .iter()
        .filter(|p| {
            let prompt = templates
                .render(
                    "annotation",
                    &[("knowledge", ""), ("question", &p.question), ("answer", &p.answer)],
                )
                .expect("annotation template");
            let reply = w2sg::backends::Backend::generate(&weak, &prompt, &cfg.generation).expect("offline model");
            extract_label(&reply.text) == Some(p.label)
        })
        .count();

    let r = &records[0];
    println!("\ntranscript for {}:", r.pair.id);
    for x in &r.transcript {
        println!("--- {}\n{}\n>>> {}", x.role, x.prompt, x.response);
    }
    println!("\nweak judge alone: {unaided}/{}", pairs.len());
    println!("with interaction: {hits}/{}", records.len());
    Ok(())
}
