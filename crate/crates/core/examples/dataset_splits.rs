//! Turns multiple-choice questions into correct/incorrect answer pairs and
//! splits them by question.
//!
//!     cargo run --example dataset_splits -- [raw.jsonl]

use w2sg::dataset::{ingest_raw, make_splits, to_binary_pairs, RawQuestion, SplitSizes};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let raw = match std::env::args().nth(1) {
        Some(path) => ingest_raw(path.as_ref())?,
        None => (0..40)
            .map(|i| RawQuestion {
                qid: format!("q{i}"),
                question: format!("Which value is listed for item {i}?"),
                correct_answer: format!("{}", i * 3),
                distractors: vec![format!("{}", i * 3 + 1), format!("{}", i * 3 + 2)],
                topic: Some(["physics", "biology"][i % 2].to_string()),
                support: None,
            })
            .collect(),
    };
    let pairs = to_binary_pairs(&raw, 42)?;
    let n = raw.len();
    let sizes = SplitSizes {
        train1: n / 10,
        train2: n * 4 / 10,
        valid: n / 10,
        test: n - n / 10 - n * 4 / 10 - n / 10,
    };
    let bundle = make_splits(&pairs, sizes, 42)?;
    for (name, split) in bundle.splits() {
        println!("{name:>6}: {:>4} pairs", split.len());
    }
    let first = &bundle.train1[0];
    println!(
        "\nexample pair {}: {:?} -> {:?} (label {})",
        first.id, first.question, first.answer, first.label
    );
    Ok(())
}
