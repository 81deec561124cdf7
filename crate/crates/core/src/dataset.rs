//! Multi-choice ingestion, binary (question, answer) conversion and
//! question-level splits.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate question id {qid:?} (line {line})")]
    DuplicateQid { qid: String, line: usize },
    #[error("question {qid:?} is invalid: {reason}")]
    InvalidQuestion { qid: String, reason: String },
    #[error("question {qid:?} has no distractors")]
    NoDistractors { qid: String },
    #[error("question {qid:?} must contribute exactly one pair per label, found {found} pairs")]
    UnbalancedQuestion { qid: String, found: usize },
    #[error("requested {requested} questions but only {available} are available (short by {})", requested - available)]
    InsufficientQuestions { requested: usize, available: usize },
}

/// Binary correctness label. `Correct` (1) marks the gold answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Incorrect = 0,
    Correct = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Incorrect),
            1 => Some(Label::Correct),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    /// {0,1} mapped onto {-1,+1}.
    pub fn signed(self) -> f64 {
        match self {
            Label::Incorrect => -1.0,
            Label::Correct => 1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Incorrect => Label::Correct,
            Label::Correct => Label::Incorrect,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(d)?;
        Label::from_u8(v).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawQuestion {
    pub qid: String,
    pub question: String,
    pub correct_answer: String,
    pub distractors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<String>,
}

impl RawQuestion {
    fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |reason: &str| DatasetError::InvalidQuestion {
            qid: self.qid.clone(),
            reason: reason.to_string(),
        };
        if self.question.trim().is_empty() {
            return Err(invalid("empty question"));
        }
        if self.distractors.is_empty() {
            return Err(DatasetError::NoDistractors { qid: self.qid.clone() });
        }
        if self.distractors.iter().any(|d| d == &self.correct_answer) {
            return Err(invalid("correct answer listed among distractors"));
        }
        Ok(())
    }
}

/// One (question, answer) example with its gold correctness label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryPair {
    pub id: String,
    pub qid: String,
    pub question: String,
    pub answer: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

impl BinaryPair {
    /// Text used as the retrieval key for lexical and embedding retrievers.
    pub fn retrieval_text(&self) -> String {
        format!("{} {}", self.question, self.answer)
    }
}

/// Per-split question counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train1: usize,
    pub train2: usize,
    pub valid: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            train1: 5000,
            train2: 5000,
            valid: 1000,
            test: 1000,
        }
    }
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train1 + self.train2 + self.valid + self.test
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBundle {
    pub train1: Vec<BinaryPair>,
    pub train2: Vec<BinaryPair>,
    pub valid: Vec<BinaryPair>,
    pub test: Vec<BinaryPair>,
}

impl SplitBundle {
    pub const NAMES: [&'static str; 4] = ["train1", "train2", "valid", "test"];

    pub fn splits(&self) -> [(&'static str, &[BinaryPair]); 4] {
        [
            ("train1", &self.train1),
            ("train2", &self.train2),
            ("valid", &self.valid),
            ("test", &self.test),
        ]
    }
}

/// Reads raw multi-choice questions, one JSON object per line.
///
/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn ingest_raw(path: &Path) -> Result<Vec<RawQuestion>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawQuestion = serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        raw.validate().map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.qid.clone()) {
            return Err(DatasetError::DuplicateQid {
                qid: raw.qid,
                line: lineno,
            });
        }
        out.push(raw);
    }
    Ok(out)
}

/// Converts each question into one positive and one negative pair.
///
/// The negative answer is drawn uniformly from the distractors with a
/// generator keyed by `(seed, qid)`.
pub fn to_binary_pairs(raw: &[RawQuestion], seed: u64) -> Result<Vec<BinaryPair>, DatasetError> {
    let mut pairs = Vec::with_capacity(raw.len() * 2);
    for q in raw {
        let negative = q
            .distractors
            .choose(&mut seed::keyed_rng(seed, &q.qid))
            .ok_or_else(|| DatasetError::NoDistractors { qid: q.qid.clone() })?;
        for (answer, label) in [(&q.correct_answer, Label::Correct), (negative, Label::Incorrect)] {
            pairs.push(BinaryPair {
                id: format!("{}-{}", q.qid, label),
                qid: q.qid.clone(),
                question: q.question.clone(),
                answer: answer.clone(),
                label,
                topic: q.topic.clone(),
            });
        }
    }
    Ok(pairs)
}

/// Partitions pairs into train1/train2/valid/test at question granularity.
pub fn make_splits(pairs: &[BinaryPair], sizes: SplitSizes, seed: u64) -> Result<SplitBundle, DatasetError> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&BinaryPair>> = HashMap::new();
    for p in pairs {
        let group = groups.entry(p.qid.as_str()).or_insert_with(|| {
            order.push(p.qid.as_str());
            Vec::new()
        });
        group.push(p);
    }
    for qid in &order {
        let group = &groups[qid];
        let has_both = group.len() == 2 && group[0].label != group[1].label;
        if !has_both {
            return Err(DatasetError::UnbalancedQuestion {
                qid: qid.to_string(),
                found: group.len(),
            });
        }
    }
    if sizes.total() > order.len() {
        return Err(DatasetError::InsufficientQuestions {
            requested: sizes.total(),
            available: order.len(),
        });
    }

    order.shuffle(&mut seed::rng(seed));
    let mut cursor = 0;
    let mut take = |n: usize| -> Vec<BinaryPair> {
        let chunk = &order[cursor..cursor + n];
        cursor += n;
        chunk
            .iter()
            .flat_map(|qid| groups[qid].iter().map(|p| (*p).clone()))
            .collect()
    };
    Ok(SplitBundle {
        train1: take(sizes.train1),
        train2: take(sizes.train2),
        valid: take(sizes.valid),
        test: take(sizes.test),
    })
}

pub fn write_pairs(path: &Path, pairs: &[BinaryPair]) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for p in pairs {
        let line = serde_json::to_string(p).expect("pair serializes");
        w.write_all(line.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_pairs(path: &Path) -> Result<Vec<BinaryPair>, DatasetError> {
    read_jsonl(path)
}

/// Generic JSONL reader used for every line-oriented file in the crate.
pub(crate) fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn question(qid: &str, distractors: &[&str]) -> RawQuestion {
        RawQuestion {
            qid: qid.into(),
            question: format!("question {qid}?"),
            correct_answer: "right".into(),
            distractors: distractors.iter().map(|s| s.to_string()).collect(),
            topic: None,
            support: None,
        }
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_preserves_order() {
        let f = write_tmp(concat!(
            r#"{"qid":"b","question":"Q2","correct_answer":"x","distractors":["y"]}"#,
            "\n",
            r#"{"qid":"a","question":"Q1","correct_answer":"x","distractors":["y","z"],"topic":"physics"}"#,
            "\n"
        ));
        let raw = ingest_raw(f.path()).unwrap();
        assert_eq!(raw.len(), 2);
        assert_eq!(raw[0].qid, "b");
        assert_eq!(raw[1].topic.as_deref(), Some("physics"));
    }

    #[test]
    fn ingest_empty_file() {
        let f = write_tmp("");
        assert!(ingest_raw(f.path()).unwrap().is_empty());
    }

    #[test]
    fn ingest_missing_question_names_line() {
        let f = write_tmp(concat!(
            r#"{"qid":"a","question":"Q1","correct_answer":"x","distractors":["y"]}"#,
            "\n",
            r#"{"qid":"b","correct_answer":"x","distractors":["y"]}"#,
            "\n"
        ));
        match ingest_raw(f.path()) {
            Err(DatasetError::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("question"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_duplicate_qid() {
        let line = r#"{"qid":"a","question":"Q1","correct_answer":"x","distractors":["y"]}"#;
        let f = write_tmp(&format!("{line}\n{line}\n"));
        assert!(matches!(
            ingest_raw(f.path()),
            Err(DatasetError::DuplicateQid { line: 2, .. })
        ));
    }

    #[test]
    fn two_pairs_per_question() {
        let pairs = to_binary_pairs(&[question("q", &["a", "b", "c"])], 1).unwrap();
        assert_eq!(pairs.len(), 2);
        let labels: HashSet<_> = pairs.iter().map(|p| p.label).collect();
        assert_eq!(labels.len(), 2);
        let neg = pairs.iter().find(|p| p.label == Label::Incorrect).unwrap();
        assert!(["a", "b", "c"].contains(&neg.answer.as_str()));
    }

    #[test]
    fn single_distractor_is_forced() {
        let pairs = to_binary_pairs(&[question("q", &["only"])], 99).unwrap();
        assert_eq!(pairs[1].answer, "only");
    }

    #[test]
    fn zero_distractors_rejected() {
        assert!(matches!(
            to_binary_pairs(&[question("q", &[])], 1),
            Err(DatasetError::NoDistractors { .. })
        ));
    }

    #[test]
    fn negative_choice_keyed_by_qid() {
        let qs: Vec<_> = (0..20)
            .map(|i| question(&format!("q{i}"), &["a", "b", "c", "d"]))
            .collect();
        let full = to_binary_pairs(&qs, 5).unwrap();
        let tail = to_binary_pairs(&qs[10..], 5).unwrap();
        assert_eq!(&full[20..], &tail[..]);
        assert_eq!(full, to_binary_pairs(&qs, 5).unwrap());
    }

    #[test]
    fn exhaustive_partition_of_four_questions() {
        let qs: Vec<_> = (0..4).map(|i| question(&format!("q{i}"), &["a"])).collect();
        let pairs = to_binary_pairs(&qs, 0).unwrap();
        let sizes = SplitSizes {
            train1: 1,
            train2: 1,
            valid: 1,
            test: 1,
        };
        let bundle = make_splits(&pairs, sizes, 3).unwrap();
        let mut all = HashSet::new();
        for (_, split) in bundle.splits() {
            assert_eq!(split.len(), 2);
            assert_eq!(split[0].qid, split[1].qid);
            assert!(all.insert(split[0].qid.clone()));
        }
    }

    #[test]
    fn shortfall_is_reported() {
        let qs: Vec<_> = (0..3).map(|i| question(&format!("q{i}"), &["a"])).collect();
        let pairs = to_binary_pairs(&qs, 0).unwrap();
        let err = make_splits(&pairs, SplitSizes::default(), 0).unwrap_err();
        assert!(err.to_string().contains("short by 11997"), "{err}");
    }
}
