//! Accuracy against gold labels, per-topic breakdowns and the weak vs.
//! weak-to-strong comparison report.
//!
//! Abstentions (predictions without a label) are left out of the accuracy
//! denominator and reported separately as `abstain_rate`; `n` counts the
//! predictions that were scored.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;

pub const UNKNOWN_TOPIC: &str = "unknown";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no gold label for prediction {0}")]
    MissingGold(String),
    #[error("cannot write {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub n: usize,
    pub abstain_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_topic: Option<BTreeMap<String, EvalResult>>,
}

/// Fraction correct over predictions that carry a label. With no scored
/// predictions the accuracy is reported as 0.
pub fn accuracy<'a>(
    preds: impl IntoIterator<Item = (&'a str, Option<Label>)>,
    gold: &HashMap<String, Label>,
) -> Result<EvalResult, EvalError> {
    let mut total = 0usize;
    let mut scored = 0usize;
    let mut correct = 0usize;
    for (id, pred) in preds {
        let g = gold.get(id).ok_or_else(|| EvalError::MissingGold(id.to_string()))?;
        total += 1;
        if let Some(p) = pred {
            scored += 1;
            correct += (p == *g) as usize;
        }
    }
    Ok(EvalResult {
        accuracy: if scored == 0 {
            0.0
        } else {
            correct as f64 / scored as f64
        },
        n: scored,
        abstain_rate: if total == 0 {
            0.0
        } else {
            (total - scored) as f64 / total as f64
        },
        per_topic: None,
    })
}

/// One row per topic; pairs without a topic fall under "unknown".
pub fn per_topic<'a>(
    preds: impl IntoIterator<Item = (&'a str, Option<Label>)>,
    gold: &HashMap<String, Label>,
    topics: &HashMap<String, String>,
) -> Result<BTreeMap<String, EvalResult>, EvalError> {
    let mut groups: BTreeMap<&str, Vec<(&str, Option<Label>)>> = BTreeMap::new();
    for (id, p) in preds {
        let topic = topics.get(id).map(String::as_str).unwrap_or(UNKNOWN_TOPIC);
        groups.entry(topic).or_default().push((id, p));
    }
    groups
        .into_iter()
        .map(|(t, rows)| Ok((t.to_string(), accuracy(rows, gold)?)))
        .collect()
}

/// Overall result with the per-topic table attached.
pub fn evaluate(
    preds: &[(&str, Option<Label>)],
    gold: &HashMap<String, Label>,
    topics: &HashMap<String, String>,
) -> Result<EvalResult, EvalError> {
    let mut overall = accuracy(preds.iter().copied(), gold)?;
    overall.per_topic = Some(per_topic(preds.iter().copied(), gold, topics)?);
    Ok(overall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W2SReport {
    pub weak: EvalResult,
    #[serde(rename = "strong")]
    pub strong_student: EvalResult,
    pub delta: f64,
    pub config_fingerprint: String,
}

impl W2SReport {
    pub fn new(weak: EvalResult, strong_student: EvalResult, config_fingerprint: impl Into<String>) -> Self {
        W2SReport {
            delta: strong_student.accuracy - weak.accuracy,
            weak,
            strong_student,
            config_fingerprint: config_fingerprint.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

fn csv_rows(prefix: &str, r: &EvalResult, rows: &mut Vec<[String; 3]>) {
    rows.push([format!("{prefix}.accuracy"), r.accuracy.to_string(), r.n.to_string()]);
    rows.push([
        format!("{prefix}.abstain_rate"),
        r.abstain_rate.to_string(),
        r.n.to_string(),
    ]);
    for (topic, t) in r.per_topic.iter().flatten() {
        rows.push([
            format!("{prefix}.topic.{topic}.accuracy"),
            t.accuracy.to_string(),
            t.n.to_string(),
        ]);
    }
}

pub fn render_report(report: &W2SReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut rows = Vec::new();
            csv_rows("weak", &report.weak, &mut rows);
            csv_rows("strong", &report.strong_student, &mut rows);
            rows.push(["delta".into(), report.delta.to_string(), String::new()]);
            rows.push([
                "config_fingerprint".into(),
                report.config_fingerprint.clone(),
                String::new(),
            ]);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["metric", "value", "n"]).expect("in-memory write");
            for r in &rows {
                w.write_record(r).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
        }
    }
}

pub fn emit_report(report: &W2SReport, path: &Path, format: ReportFormat) -> Result<(), EvalError> {
    std::fs::write(path, render_report(report, format)).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// A published accuracy shipped for comparison only; nothing here was
/// produced by this crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub setting: &'static str,
    pub weak: f64,
    pub weak_to_strong: f64,
    pub reproduced: bool,
}

/// Published science-QA accuracies for a 1.8B chat teacher and a 7B base
/// student. Not reproducible without fine-tuning those models.
pub const REFERENCE_ROWS: &[ReferenceRow] = &[
    ReferenceRow {
        setting: "before oversight",
        weak: 0.676,
        weak_to_strong: 0.826,
        reproduced: false,
    },
    ReferenceRow {
        setting: "after interaction oversight",
        weak: 0.749,
        weak_to_strong: 0.848,
        reproduced: false,
    },
    ReferenceRow {
        setting: "after oversight + 11-run vote",
        weak: 0.768,
        weak_to_strong: 0.851,
        reproduced: false,
    },
];
