//! In-context learning from weak labels: shots come from a pseudo-labeled
//! pool, chosen at random, by BM25, by embedding similarity or by vote-k,
//! and the strong model answers 1 or 0 for each test pair. Runs offline
//! against a rule-based model, which judges from its own key and ignores
//! the shots; the output shows which shots each retriever picks.
//!
//!     cargo run --example icl_retrievers

#[path = "support/mod.rs"]
mod support;

use w2sg::dataset::BinaryPair;
use w2sg::icl::{build_prompt, run_icl, IclConfig, PromptStyle, RetrieverKind, Shot};
use w2sg::learners::SoftLabel;
use w2sg::templates::TemplateSet;

use support::{quiz_pairs, QuizModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pairs = quiz_pairs();
    let (pool_pairs, test): (Vec<BinaryPair>, Vec<BinaryPair>) = pairs.into_iter().partition(|p| *p.qid < *"q6");
    // A weak labeler that is right on two thirds of the pool.
    let pool: Vec<Shot> = pool_pairs
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let p1 = if p.label.as_u8() == 1 { 0.8 } else { 0.25 };
            let p1 = if i % 3 == 2 { 1.0 - p1 } else { p1 };
            Shot::from_soft(p, SoftLabel::from_p1(p1))
        })
        .collect();
    let model = QuizModel::new("strong", 0.1);
    let templates = TemplateSet::default();

    for style in [PromptStyle::Basic, PromptStyle::Confidence] {
        for retriever in [
            RetrieverKind::Random,
            RetrieverKind::Bm25,
            RetrieverKind::Topk,
            RetrieverKind::Votek,
        ] {
            let cfg = IclConfig {
                k: 4,
                style,
                retriever,
                seed: 5,
                ..Default::default()
            };
            let (preds, prompts) = run_icl(&test, &pool, &cfg, &model, &model, &templates)?;
            let hits = preds
                .iter()
                .zip(&test)
                .filter(|(p, g)| p.label == Some(g.label))
                .count();
            let shots: Vec<&str> = prompts[0]
                .prompt
                .lines()
                .filter_map(|l| l.strip_prefix("Q:"))
                .filter_map(|l| l.split(" A:").next())
                .collect();
            println!("{style:?} {retriever:?}: {hits}/{} correct", test.len());
            println!("  shots for {:?}: {:?}", test[0].question, &shots[..shots.len() - 1]);
        }
    }
    let prompt = build_prompt(&templates, &pool[..2], &test[0], PromptStyle::Confidence)?;
    println!("\nexample prompt:\n{prompt}");
    Ok(())
}
