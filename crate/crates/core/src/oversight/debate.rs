//! Debate-enhanced oversight. Agent A always argues that the answer is
//! correct and agent B that it is incorrect. From round 2 on each agent sees
//! its opponent's previous explanation; the weak model then judges from both
//! final explanations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_failures, extract_label, AnnotationRecord, Exchange, OversightError, SoConfig};
use crate::backends::{Backend, BackendError, GenerationParams};
use crate::concurrency::map_bounded;
use crate::dataset::{self, BinaryPair, Label};
use crate::templates::{compose, TemplateSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialDemo {
    pub question: String,
    pub answer: String,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateDemo {
    pub question: String,
    pub answer: String,
    pub another_explanation: String,
    pub new_explanation: String,
}

/// Worked examples shown to each side. All lists may be empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebateDemos {
    pub initial_correct: Vec<InitialDemo>,
    pub initial_incorrect: Vec<InitialDemo>,
    pub update_correct: Vec<UpdateDemo>,
    pub update_incorrect: Vec<UpdateDemo>,
}

impl DebateDemos {
    pub fn load(path: &Path) -> Result<Self, OversightError> {
        let text = std::fs::read_to_string(path).map_err(|source| OversightError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| {
            OversightError::Data(dataset::DatasetError::Parse {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub pair_id: String,
    pub run_id: u32,
    /// (agent A, agent B) explanation per round.
    pub rounds: Vec<(String, String)>,
    /// Judgement after each round when per-round judging is on, else only
    /// after the last round.
    pub judgements: Vec<Option<Label>>,
}

impl DebateTranscript {
    pub fn n(&self) -> usize {
        self.rounds.len()
    }
}

#[derive(Debug, Clone)]
pub struct DebateOutcome {
    pub records: Vec<AnnotationRecord>,
    pub transcripts: Vec<DebateTranscript>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Correct,
    Incorrect,
}

struct Debate<'a> {
    templates: &'a TemplateSet,
    demos: &'a DebateDemos,
    params: &'a GenerationParams,
}

impl Debate<'_> {
    fn initial_prompt(&self, side: Side, pair: &BinaryPair) -> Result<String, OversightError> {
        let (header, demos) = match side {
            Side::Correct => ("debate_initial_correct", &self.demos.initial_correct),
            Side::Incorrect => ("debate_initial_incorrect", &self.demos.initial_incorrect),
        };
        let blocks = demos
            .iter()
            .map(|d| {
                self.templates.render(
                    "debate_initial_demo",
                    &[
                        ("question", &d.question),
                        ("answer", &d.answer),
                        ("explanation", &d.explanation),
                    ],
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let header = self.templates.render(header, &[])?;
        let query = self.templates.render(
            "debate_initial_query",
            &[("question", &pair.question), ("answer", &pair.answer)],
        )?;
        Ok(compose(Some(&header), &blocks, &query))
    }

    fn update_prompt(&self, side: Side, pair: &BinaryPair, opponent: &str) -> Result<String, OversightError> {
        let (header, demos) = match side {
            Side::Correct => ("debate_update_correct", &self.demos.update_correct),
            Side::Incorrect => ("debate_update_incorrect", &self.demos.update_incorrect),
        };
        let blocks = demos
            .iter()
            .map(|d| {
                self.templates.render(
                    "debate_update_demo",
                    &[
                        ("question", &d.question),
                        ("answer", &d.answer),
                        ("another_explanation", &d.another_explanation),
                        ("new_explanation", &d.new_explanation),
                    ],
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let header = self.templates.render(header, &[])?;
        let query = self.templates.render(
            "debate_update_query",
            &[
                ("question", &pair.question),
                ("answer", &pair.answer),
                ("another_explanation", opponent),
            ],
        )?;
        Ok(compose(Some(&header), &blocks, &query))
    }

    /// The correct-side explanation always fills the "correct" slot.
    fn judgement_prompt(&self, pair: &BinaryPair, correct: &str, incorrect: &str) -> Result<String, OversightError> {
        Ok(self.templates.render(
            "debate_judgement",
            &[
                ("correct_explanation", correct),
                ("incorrect_explanation", incorrect),
                ("question", &pair.question),
                ("answer", &pair.answer),
            ],
        )?)
    }
}

fn call(
    backend: &dyn Backend,
    role: String,
    prompt: String,
    params: &GenerationParams,
    log: &mut Vec<Exchange>,
) -> Result<String, BackendError> {
    let text = backend.generate(&prompt, params)?.text;
    log.push(Exchange {
        role,
        prompt,
        response: text.clone(),
    });
    Ok(text.trim().to_string())
}

type PairResult = (AnnotationRecord, DebateTranscript);

/// Runs `cfg.rounds` rounds of debate on every pair and lets the weak model
/// judge. Pairs run concurrently; each pair's calls are sequential.
#[allow(clippy::too_many_arguments)]
pub fn run_debate(
    pairs: &[BinaryPair],
    cfg: &SoConfig,
    aux_a: &dyn Backend,
    aux_b: &dyn Backend,
    weak: &dyn Backend,
    templates: &TemplateSet,
    demos: &DebateDemos,
    run_id: u32,
) -> Result<DebateOutcome, OversightError> {
    if cfg.rounds == 0 {
        return Err(OversightError::InvalidConfig("debate needs at least one round".into()));
    }
    let debate = Debate {
        templates,
        demos,
        params: &cfg.generation,
    };
    let results = map_bounded(pairs, cfg.max_in_flight, |_, pair| {
        debate_pair(&debate, pair, cfg, aux_a, aux_b, weak, run_id)
    });
    let mut records = Vec::with_capacity(pairs.len());
    let mut transcripts = Vec::with_capacity(pairs.len());
    for r in results {
        let (rec, tr) = r?;
        records.push(rec);
        transcripts.push(tr);
    }
    check_failures(&records, cfg.failure_cap)?;
    Ok(DebateOutcome { records, transcripts })
}

fn debate_pair(
    debate: &Debate<'_>,
    pair: &BinaryPair,
    cfg: &SoConfig,
    aux_a: &dyn Backend,
    aux_b: &dyn Backend,
    weak: &dyn Backend,
    run_id: u32,
) -> Result<PairResult, OversightError> {
    let mut log = Vec::new();
    let mut transcript = DebateTranscript {
        pair_id: pair.id.clone(),
        run_id,
        rounds: Vec::with_capacity(cfg.rounds),
        judgements: Vec::new(),
    };
    let params = debate.params;
    let mut raw = String::new();
    let mut label = None;
    for round in 1..=cfg.rounds {
        let (pa, pb) = match transcript.rounds.last() {
            None => (
                debate.initial_prompt(Side::Correct, pair)?,
                debate.initial_prompt(Side::Incorrect, pair)?,
            ),
            Some((ea, eb)) => (
                debate.update_prompt(Side::Correct, pair, eb)?,
                debate.update_prompt(Side::Incorrect, pair, ea)?,
            ),
        };
        let step = call(aux_a, format!("aux_a/round{round}"), pa, params, &mut log)
            .and_then(|ea| Ok((ea, call(aux_b, format!("aux_b/round{round}"), pb, params, &mut log)?)));
        let (ea, eb) = match step {
            Ok(v) => v,
            Err(e) => return Ok(failed(pair, run_id, log, transcript, &e)),
        };
        transcript.rounds.push((ea, eb));

        if cfg.judge_every_round || round == cfg.rounds {
            let (ea, eb) = transcript.rounds.last().expect("round just pushed");
            let prompt = debate.judgement_prompt(pair, ea, eb)?;
            match weak.generate(&prompt, params) {
                Ok(r) => {
                    log.push(Exchange {
                        role: format!("weak/round{round}"),
                        prompt,
                        response: r.text.clone(),
                    });
                    label = extract_label(&r.text);
                    raw = r.text;
                    transcript.judgements.push(label);
                }
                Err(e) => return Ok(failed(pair, run_id, log, transcript, &e)),
            }
        }
    }
    let record = AnnotationRecord {
        pair: pair.clone(),
        raw_response: raw,
        extracted: label,
        transcript: log,
        run_id,
        failure: None,
    };
    Ok((record, transcript))
}

fn failed(
    pair: &BinaryPair,
    run_id: u32,
    log: Vec<Exchange>,
    transcript: DebateTranscript,
    e: &BackendError,
) -> PairResult {
    (AnnotationRecord::failed_with(pair, run_id, log, e), transcript)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendResponse, Capability};
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Replies with a counter so every explanation is distinct.
    struct Counting(&'static str, AtomicUsize);

    impl Backend for Counting {
        fn name(&self) -> &str {
            self.0
        }
        fn capabilities(&self) -> &[Capability] {
            &[Capability::Generate]
        }
        fn generate(&self, _: &str, _: &GenerationParams) -> Result<BackendResponse, BackendError> {
            Ok(BackendResponse::text(format!(
                "{} says #{}",
                self.0,
                self.1.fetch_add(1, Ordering::SeqCst)
            )))
        }
        fn embed(&self, _: &str) -> Result<Vec<f64>, BackendError> {
            unimplemented!()
        }
    }

    fn pair() -> BinaryPair {
        BinaryPair {
            id: "q-1".into(),
            qid: "q".into(),
            question: "What boils at 100 C?".into(),
            answer: "Water".into(),
            label: Label::Correct,
            topic: None,
        }
    }

    #[test]
    fn rounds_embed_opponent_text() {
        let a = Counting("A", AtomicUsize::new(0));
        let b = Counting("B", AtomicUsize::new(0));
        let weak = crate::backends::ScriptedBackend::new("weak").lenient("No");
        let cfg = SoConfig {
            rounds: 3,
            max_in_flight: 1,
            ..Default::default()
        };
        let out = run_debate(
            &[pair()],
            &cfg,
            &a,
            &b,
            &weak,
            &TemplateSet::default(),
            &DebateDemos::default(),
            1,
        )
        .unwrap();
        let tr = &out.transcripts[0];
        assert_eq!(tr.n(), 3);
        let log = &out.records[0].transcript;
        for n in 1..3 {
            let prompt_a = &log
                .iter()
                .find(|e| e.role == format!("aux_a/round{}", n + 1))
                .unwrap()
                .prompt;
            let prompt_b = &log
                .iter()
                .find(|e| e.role == format!("aux_b/round{}", n + 1))
                .unwrap()
                .prompt;
            assert!(prompt_a.contains(&tr.rounds[n - 1].1));
            assert!(prompt_b.contains(&tr.rounds[n - 1].0));
        }
        assert_eq!(out.records[0].extracted, Some(Label::Incorrect));
        assert_eq!(tr.judgements.len(), 1);
    }

    #[test]
    fn single_round_judges_initial_explanations() {
        let a = crate::backends::ScriptedBackend::new("a").lenient("right");
        let b = crate::backends::ScriptedBackend::new("b").lenient("wrong");
        let weak = crate::backends::ScriptedBackend::new("weak").lenient("Yes");
        let cfg = SoConfig {
            rounds: 1,
            judge_every_round: true,
            ..Default::default()
        };
        let out = run_debate(
            &[pair()],
            &cfg,
            &a,
            &b,
            &weak,
            &TemplateSet::default(),
            &DebateDemos::default(),
            1,
        )
        .unwrap();
        let log = &out.records[0].transcript;
        assert_eq!(log.len(), 3);
        assert!(log[2]
            .prompt
            .contains("correct for the reason right\nAnother person think it is incorrect for the reason wrong"));
    }
}
