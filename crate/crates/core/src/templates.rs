//! Prompt templates with named slots written as [``name''].
//!
//! The shipped defaults live in `templates/*.txt`, one file per template.
//! Multi-demonstration prompts are assembled from a header, repeated demo
//! blocks and a query block, joined by newlines (see [`compose`]).

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("unbound slot: {0}")]
    Unbound(String),
    #[error("unexpected slot: {0}")]
    Unexpected(String),
    #[error("template {template:?} repeats slot {slot:?}")]
    DuplicateSlot { template: String, slot: String },
    #[error("unknown template {0:?}")]
    Unknown(String),
    #[error("cannot read template {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    body: String,
    segments: Vec<Segment>,
}

fn slot_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    // Some templates write a slot as [``answer'' ]; the space is tolerated.
    PATTERN.get_or_init(|| Regex::new(r"\[``([^`'\]]+)''\s*\]").expect("valid slot regex"))
}

impl PromptTemplate {
    pub fn parse(name: impl Into<String>, body: impl Into<String>) -> Result<Self, TemplateError> {
        let name = name.into();
        let body = body.into();
        let mut segments = Vec::new();
        let mut seen = HashSet::new();
        let mut last = 0;
        for cap in slot_pattern().captures_iter(&body) {
            let whole = cap.get(0).expect("match");
            let slot = cap[1].to_string();
            if !seen.insert(slot.clone()) {
                return Err(TemplateError::DuplicateSlot { template: name, slot });
            }
            if whole.start() > last {
                segments.push(Segment::Text(body[last..whole.start()].to_string()));
            }
            segments.push(Segment::Slot(slot));
            last = whole.end();
        }
        if last < body.len() {
            segments.push(Segment::Text(body[last..].to_string()));
        }
        Ok(PromptTemplate { name, body, segments })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(n) => Some(n.as_str()),
            Segment::Text(_) => None,
        })
    }

    /// Substitutes every slot exactly once. Values are inserted verbatim and
    /// never rescanned for slots.
    pub fn render(&self, slots: &[(&str, &str)]) -> Result<String, TemplateError> {
        let map: BTreeMap<&str, &str> = slots.iter().copied().collect();
        let wanted: HashSet<&str> = self.slots().collect();
        if let Some(extra) = map.keys().find(|k| !wanted.contains(*k)) {
            return Err(TemplateError::Unexpected(extra.to_string()));
        }
        let mut out = String::with_capacity(self.body.len() + 64);
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(name) => out.push_str(
                    map.get(name.as_str())
                        .ok_or_else(|| TemplateError::Unbound(name.clone()))?,
                ),
            }
        }
        Ok(out)
    }
}

/// Joins an optional header, demo blocks and the query block with newlines.
pub fn compose(header: Option<&str>, demos: &[String], query: &str) -> String {
    let mut parts: Vec<&str> = Vec::with_capacity(demos.len() + 2);
    if let Some(h) = header {
        parts.push(h);
    }
    parts.extend(demos.iter().map(String::as_str));
    parts.push(query);
    parts.join("\n")
}

macro_rules! shipped {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../templates/", $name, ".txt")))),*]
    };
}

const SHIPPED: &[(&str, &str)] = shipped![
    "context_generation",
    "knowledge_demo",
    "knowledge_query",
    "annotation",
    "debate_initial_correct",
    "debate_initial_incorrect",
    "debate_initial_demo",
    "debate_initial_query",
    "debate_update_correct",
    "debate_update_incorrect",
    "debate_update_demo",
    "debate_update_query",
    "debate_judgement",
    "icl_basic_header",
    "icl_confidence_header",
    "icl_shot",
    "icl_confidence_shot",
    "icl_query",
];

/// Every template the protocols use, keyed by file stem.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates = SHIPPED
            .iter()
            .map(|(name, body)| {
                let t = PromptTemplate::parse(*name, *body).expect("shipped templates parse");
                (name.to_string(), t)
            })
            .collect();
        TemplateSet { templates }
    }
}

impl TemplateSet {
    pub fn names() -> impl Iterator<Item = &'static str> {
        SHIPPED.iter().map(|(n, _)| *n)
    }

    /// Shipped defaults overridden by any `<name>.txt` present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = TemplateSet::default();
        for name in Self::names() {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let body = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                set.templates
                    .insert(name.to_string(), PromptTemplate::parse(name, body)?);
            }
        }
        Ok(set)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), TemplateError> {
        for t in self.templates.values() {
            let path = dir.join(format!("{}.txt", t.name()));
            std::fs::write(&path, t.body()).map_err(|e| TemplateError::Io {
                path,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates
            .get(name)
            .ok_or_else(|| TemplateError::Unknown(name.to_string()))
    }

    pub fn render(&self, name: &str, slots: &[(&str, &str)]) -> Result<String, TemplateError> {
        self.get(name)?.render(slots)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_substitution() {
        let t = PromptTemplate::parse("t", "Q: [``question'']").unwrap();
        assert_eq!(t.render(&[("question", "x")]).unwrap(), "Q: x");
    }

    #[test]
    fn slot_free_identity() {
        let t = PromptTemplate::parse("t", "plain text").unwrap();
        assert_eq!(t.render(&[]).unwrap(), "plain text");
    }

    #[test]
    fn missing_and_extra_slots() {
        let t = PromptTemplate::parse("t", "Q: [``question'']").unwrap();
        assert_eq!(t.render(&[]).unwrap_err().to_string(), "unbound slot: question");
        assert_eq!(
            t.render(&[("question", "x"), ("answer", "y")]).unwrap_err(),
            TemplateError::Unexpected("answer".into())
        );
    }

    #[test]
    fn values_are_not_rescanned() {
        let t = PromptTemplate::parse("t", "[``a''] and [``b'']").unwrap();
        assert_eq!(t.render(&[("a", "[``b'']"), ("b", "B")]).unwrap(), "[``b''] and B");
    }

    #[test]
    fn spaced_slot_is_recognised() {
        let t = PromptTemplate::parse("t", "answer:[``answer'' ]\nOutput:").unwrap();
        assert_eq!(t.render(&[("answer", "hydrogen")]).unwrap(), "answer:hydrogen\nOutput:");
    }

    #[test]
    fn duplicate_slot_rejected() {
        assert!(matches!(
            PromptTemplate::parse("t", "[``a''] [``a'']"),
            Err(TemplateError::DuplicateSlot { .. })
        ));
    }

    #[test]
    fn shipped_templates_have_expected_slots() {
        let set = TemplateSet::default();
        let slots: Vec<_> = set.get("debate_judgement").unwrap().slots().collect();
        assert_eq!(
            slots,
            vec!["correct_explanation", "incorrect_explanation", "question", "answer"]
        );
        assert_eq!(set.get("icl_basic_header").unwrap().slots().count(), 0);
    }

    #[test]
    fn load_dir_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("icl_query.txt"),
            "Question: [``question''] / [``answer'']",
        )
        .unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(
            set.render("icl_query", &[("question", "q"), ("answer", "a")]).unwrap(),
            "Question: q / a"
        );
        assert_eq!(
            set.get("annotation").unwrap(),
            TemplateSet::default().get("annotation").unwrap()
        );
    }
}
