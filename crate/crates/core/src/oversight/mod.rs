//! Scalable oversight: the weak model annotates pairs with help from
//! auxiliary models, either through background-knowledge interaction
//! ([`interaction`]) or a two-agent debate ([`debate`]).
//!
//! Both protocols produce [`AnnotationRecord`]s carrying the full prompt and
//! response history, so any run can be replayed through a scripted backend.

pub mod debate;
pub mod interaction;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, GenerationParams};
use crate::concurrency::DEFAULT_MAX_IN_FLIGHT;
use crate::dataset::{self, BinaryPair, DatasetError, Label};
use crate::ensemble::hard_vote;
use crate::seed;
use crate::templates::TemplateError;
use crate::text::tokenize;

pub use debate::{run_debate, DebateDemos, DebateOutcome, DebateTranscript, InitialDemo, UpdateDemo};
pub use interaction::{generate_context_examples, interaction_annotate, ContextExample};

#[derive(Debug, Error)]
pub enum OversightError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("oversight config: {0}")]
    InvalidConfig(String),
    #[error("need {requested} distinct questions, only {available} available")]
    NotEnoughQuestions { requested: usize, available: usize },
    #[error("context generation failed for question {qid}: {source}")]
    ContextGeneration {
        qid: String,
        #[source]
        source: BackendError,
    },
    #[error("weak model returned empty knowledge for question {qid}")]
    EmptyKnowledge { qid: String },
    #[error("{failed} of {total} pairs failed, above the {cap} failure cap")]
    FailureCap { failed: usize, total: usize, cap: f64 },
    #[error("class {class} has {available} usable records, {requested} requested")]
    Shortfall {
        class: Label,
        available: usize,
        requested: usize,
    },
    #[error("run {run_id} did not annotate pair {pair_id}")]
    MissingPair { run_id: u32, pair_id: String },
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoConfig {
    /// Size of the generated context-example pool.
    pub m: usize,
    /// Context examples shown per knowledge query.
    pub n: usize,
    /// Debate rounds.
    pub rounds: usize,
    pub generation: GenerationParams,
    pub runs: usize,
    pub seed: u64,
    pub max_in_flight: usize,
    pub judge_every_round: bool,
    /// Largest tolerated fraction of failed pairs in a run.
    pub failure_cap: f64,
    /// When set, annotated sets are balanced to this many records per class.
    pub per_class: Option<usize>,
}

impl Default for SoConfig {
    fn default() -> Self {
        SoConfig {
            m: 10,
            n: 3,
            rounds: 3,
            generation: GenerationParams::default(),
            runs: 1,
            seed: 0,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            judge_every_round: false,
            failure_cap: 0.10,
            per_class: None,
        }
    }
}

impl SoConfig {
    pub fn validate(&self) -> Result<(), OversightError> {
        let bad = |m: &str| Err(OversightError::InvalidConfig(m.to_string()));
        if self.n > self.m {
            return bad("n must not exceed m");
        }
        if self.rounds == 0 {
            return bad("debate needs at least one round");
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.failure_cap) {
            return bad("failure_cap must lie in [0, 1]");
        }
        self.generation
            .validate()
            .map_err(|e| OversightError::InvalidConfig(e.to_string()))
    }
}

/// One model call inside a protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: String,
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub pair: BinaryPair,
    pub raw_response: String,
    /// `None` when no extraction rule matched or the pair failed.
    pub extracted: Option<Label>,
    pub transcript: Vec<Exchange>,
    pub run_id: u32,
    /// Backend error that stopped this pair, if any.
    pub failure: Option<String>,
}

impl AnnotationRecord {
    pub fn transcript_ref(&self) -> String {
        transcript_ref(self.run_id, &self.pair.id)
    }

    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    fn failed_with(pair: &BinaryPair, run_id: u32, transcript: Vec<Exchange>, err: &BackendError) -> Self {
        AnnotationRecord {
            pair: pair.clone(),
            raw_response: String::new(),
            extracted: None,
            transcript,
            run_id,
            failure: Some(err.to_string()),
        }
    }
}

pub fn transcript_ref(run_id: u32, pair_id: &str) -> String {
    format!("run{run_id}/{pair_id}")
}

/// Rule-based label: the first word decides if it is yes or no, otherwise the
/// first standalone yes/no token on the first line, otherwise abstain.
pub fn extract_label(text: &str) -> Option<Label> {
    let text = text.trim();
    let word = |w: &str| match w {
        "yes" => Some(Label::Correct),
        "no" => Some(Label::Incorrect),
        _ => None,
    };
    let first = text.split_whitespace().next()?;
    let first = first.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    if let Some(l) = word(&first) {
        return Some(l);
    }
    let line = text.lines().next().unwrap_or("");
    tokenize(line).iter().find_map(|t| word(t))
}

/// Fails the run when more than `cap` of the records failed.
pub(crate) fn check_failures(records: &[AnnotationRecord], cap: f64) -> Result<(), OversightError> {
    let failed = records.iter().filter(|r| r.failed()).count();
    if failed as f64 > cap * records.len() as f64 {
        return Err(OversightError::FailureCap {
            failed,
            total: records.len(),
            cap,
        });
    }
    Ok(())
}

/// Exactly `per_class` items of each label, drawn uniformly without
/// replacement; unlabeled items are never chosen. Output keeps input order.
pub fn balance_by<T: Clone>(
    items: &[T],
    label_of: impl Fn(&T) -> Option<Label>,
    per_class: usize,
    seed: u64,
) -> Result<Vec<T>, OversightError> {
    let mut rng = seed::rng(seed);
    let mut keep = vec![false; items.len()];
    for class in [Label::Incorrect, Label::Correct] {
        let members: Vec<usize> = (0..items.len())
            .filter(|&i| label_of(&items[i]) == Some(class))
            .collect();
        if members.len() < per_class {
            return Err(OversightError::Shortfall {
                class,
                available: members.len(),
                requested: per_class,
            });
        }
        for k in index::sample(&mut rng, members.len(), per_class) {
            keep[members[k]] = true;
        }
    }
    Ok(items
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(t, _)| t.clone())
        .collect())
}

pub fn balance_labels(
    records: &[AnnotationRecord],
    per_class: usize,
    seed: u64,
) -> Result<Vec<AnnotationRecord>, OversightError> {
    balance_by(
        records,
        |r| if r.failed() { None } else { r.extracted },
        per_class,
        seed,
    )
}

/// Hard-vote result for one pair across oversight runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VotedLabel {
    pub pair_id: String,
    pub label: Option<Label>,
    pub votes: Vec<Option<Label>>,
}

#[derive(Debug, Clone)]
pub struct MultiRunOutcome {
    pub runs: Vec<Vec<AnnotationRecord>>,
    pub voted: Vec<VotedLabel>,
}

/// Seed of run `run_id` (1-based) under base seed `seed`.
pub fn run_seed(seed: u64, run_id: u32) -> u64 {
    seed.wrapping_add(run_id as u64)
}

/// Runs an annotation procedure `runs` times with seeds seed+1..=seed+runs and
/// hard-votes each pair over the runs that produced a label.
pub fn multi_run_vote<E>(
    runs: usize,
    seed: u64,
    mut annotate: impl FnMut(u32, u64) -> Result<Vec<AnnotationRecord>, E>,
) -> Result<MultiRunOutcome, E>
where
    E: From<OversightError>,
{
    if runs == 0 {
        return Err(OversightError::InvalidConfig("runs must be at least 1".into()).into());
    }
    let mut all = Vec::with_capacity(runs);
    for r in 1..=runs as u32 {
        all.push(annotate(r, run_seed(seed, r))?);
    }
    let lookup: Vec<HashMap<&str, Option<Label>>> = all
        .iter()
        .map(|recs| recs.iter().map(|r| (r.pair.id.as_str(), r.extracted)).collect())
        .collect();
    let mut voted = Vec::with_capacity(all[0].len());
    for rec in &all[0] {
        let id = rec.pair.id.as_str();
        let mut votes = Vec::with_capacity(runs);
        for (r, map) in lookup.iter().enumerate() {
            let v = map.get(id).ok_or_else(|| OversightError::MissingPair {
                run_id: r as u32 + 1,
                pair_id: id.to_string(),
            })?;
            votes.push(*v);
        }
        let cast: Vec<Label> = votes.iter().flatten().copied().collect();
        let label = if cast.is_empty() {
            None
        } else {
            Some(hard_vote(&cast).expect("nonempty vote"))
        };
        voted.push(VotedLabel {
            pair_id: id.to_string(),
            label,
            votes,
        });
    }
    Ok(MultiRunOutcome { runs: all, voted })
}

/// Line of an annotation JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationLine {
    pub pair_id: String,
    pub label: Option<Label>,
    pub abstain: bool,
    pub run_id: u32,
    pub transcript_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl From<&AnnotationRecord> for AnnotationLine {
    fn from(r: &AnnotationRecord) -> Self {
        AnnotationLine {
            pair_id: r.pair.id.clone(),
            label: r.extracted,
            abstain: r.extracted.is_none(),
            run_id: r.run_id,
            transcript_ref: r.transcript_ref(),
            error: r.failure.clone(),
        }
    }
}

impl AnnotationLine {
    /// Voted lines use run id 0 and list the per-run transcripts they summarise.
    pub fn from_vote(v: &VotedLabel) -> Self {
        let refs: Vec<String> = (1..=v.votes.len() as u32)
            .map(|r| transcript_ref(r, &v.pair_id))
            .collect();
        AnnotationLine {
            pair_id: v.pair_id.clone(),
            label: v.label,
            abstain: v.label.is_none(),
            run_id: 0,
            transcript_ref: refs.join(","),
            error: None,
        }
    }
}

/// Line of a transcript sidecar file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub transcript_ref: String,
    pub pair_id: String,
    pub run_id: u32,
    pub exchanges: Vec<Exchange>,
}

impl From<&AnnotationRecord> for TranscriptLine {
    fn from(r: &AnnotationRecord) -> Self {
        TranscriptLine {
            transcript_ref: r.transcript_ref(),
            pair_id: r.pair.id.clone(),
            run_id: r.run_id,
            exchanges: r.transcript.clone(),
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), OversightError> {
    let io = |source| OversightError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes `<stem>.jsonl` and `<stem>.transcripts.jsonl` into `dir`.
pub fn write_records(dir: &Path, stem: &str, records: &[AnnotationRecord]) -> Result<(), OversightError> {
    let lines: Vec<AnnotationLine> = records.iter().map(AnnotationLine::from).collect();
    let transcripts: Vec<TranscriptLine> = records.iter().map(TranscriptLine::from).collect();
    write_jsonl(&dir.join(format!("{stem}.jsonl")), &lines)?;
    write_jsonl(&dir.join(format!("{stem}.transcripts.jsonl")), &transcripts)
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationLine>, OversightError> {
    Ok(dataset::read_jsonl(path)?)
}
