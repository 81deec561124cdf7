//! Interaction-enhanced oversight: the weak model writes a small pool of
//! background-knowledge examples, the auxiliary model uses a few of them as
//! demonstrations to write knowledge for each pair, and the weak model judges
//! the pair given that knowledge.

use std::collections::HashSet;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{check_failures, extract_label, AnnotationRecord, Exchange, OversightError, SoConfig};
use crate::backends::Backend;
use crate::concurrency::map_bounded;
use crate::dataset::BinaryPair;
use crate::seed;
use crate::templates::{compose, TemplateSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextExample {
    pub qid: String,
    pub question: String,
    pub knowledge: String,
}

/// Picks `cfg.m` distinct questions at random and asks the weak model for
/// background knowledge on each. The knowledge is used as-is.
pub fn generate_context_examples(
    pairs: &[BinaryPair],
    weak: &dyn Backend,
    templates: &TemplateSet,
    cfg: &SoConfig,
) -> Result<Vec<ContextExample>, OversightError> {
    let mut seen = HashSet::new();
    let questions: Vec<&BinaryPair> = pairs.iter().filter(|p| seen.insert(p.qid.as_str())).collect();
    if cfg.m > questions.len() {
        return Err(OversightError::NotEnoughQuestions {
            requested: cfg.m,
            available: questions.len(),
        });
    }
    let mut rng = seed::keyed_rng(cfg.seed, "context-examples");
    let chosen: Vec<&BinaryPair> = index::sample(&mut rng, questions.len(), cfg.m)
        .into_iter()
        .map(|i| questions[i])
        .collect();
    let prompts = chosen
        .iter()
        .map(|p| templates.render("context_generation", &[("question", &p.question)]))
        .collect::<Result<Vec<_>, _>>()?;
    let replies = map_bounded(&prompts, cfg.max_in_flight, |_, prompt| {
        weak.generate(prompt, &cfg.generation)
    });
    chosen
        .into_iter()
        .zip(replies)
        .map(|(p, reply)| {
            let reply = reply.map_err(|source| OversightError::ContextGeneration {
                qid: p.qid.clone(),
                source,
            })?;
            let knowledge = reply.text.trim().to_string();
            if knowledge.is_empty() {
                return Err(OversightError::EmptyKnowledge { qid: p.qid.clone() });
            }
            Ok(ContextExample {
                qid: p.qid.clone(),
                question: p.question.clone(),
                knowledge,
            })
        })
        .collect()
}

/// Knowledge-extraction prompt: one demo block per example, then the query.
pub fn knowledge_prompt(
    templates: &TemplateSet,
    demos: &[&ContextExample],
    question: &str,
) -> Result<String, OversightError> {
    let blocks = demos
        .iter()
        .map(|e| {
            templates.render(
                "knowledge_demo",
                &[("question", &e.question), ("knowledge", &e.knowledge)],
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let query = templates.render("knowledge_query", &[("question", question)])?;
    Ok(compose(None, &blocks, &query))
}

/// Annotates every pair. Each pair draws its own `cfg.n` demonstrations from
/// `examples` using a seed keyed by the pair id, so results do not depend on
/// scheduling. Backend failures mark the pair failed; too many fail the run.
pub fn interaction_annotate(
    pairs: &[BinaryPair],
    examples: &[ContextExample],
    cfg: &SoConfig,
    aux: &dyn Backend,
    weak: &dyn Backend,
    templates: &TemplateSet,
    run_id: u32,
) -> Result<Vec<AnnotationRecord>, OversightError> {
    if cfg.n > examples.len() {
        return Err(OversightError::InvalidConfig(format!(
            "n = {} but only {} context examples",
            cfg.n,
            examples.len()
        )));
    }
    let results = map_bounded(pairs, cfg.max_in_flight, |_, pair| {
        annotate_pair(pair, examples, cfg, aux, weak, templates, run_id)
    });
    let records = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    check_failures(&records, cfg.failure_cap)?;
    Ok(records)
}

fn annotate_pair(
    pair: &BinaryPair,
    examples: &[ContextExample],
    cfg: &SoConfig,
    aux: &dyn Backend,
    weak: &dyn Backend,
    templates: &TemplateSet,
    run_id: u32,
) -> Result<AnnotationRecord, OversightError> {
    let mut rng = seed::keyed_rng(cfg.seed, &pair.id);
    let demos: Vec<&ContextExample> = index::sample(&mut rng, examples.len(), cfg.n)
        .into_iter()
        .map(|i| &examples[i])
        .collect();
    let mut transcript = Vec::with_capacity(2);

    let prompt = knowledge_prompt(templates, &demos, &pair.question)?;
    let knowledge = match aux.generate(&prompt, &cfg.generation) {
        Ok(r) => r.text,
        Err(e) => return Ok(AnnotationRecord::failed_with(pair, run_id, transcript, &e)),
    };
    transcript.push(Exchange {
        role: "aux".into(),
        prompt,
        response: knowledge.clone(),
    });

    let prompt = templates.render(
        "annotation",
        &[
            ("knowledge", knowledge.trim()),
            ("question", &pair.question),
            ("answer", &pair.answer),
        ],
    )?;
    let judgement = match weak.generate(&prompt, &cfg.generation) {
        Ok(r) => r.text,
        Err(e) => return Ok(AnnotationRecord::failed_with(pair, run_id, transcript, &e)),
    };
    transcript.push(Exchange {
        role: "weak".into(),
        prompt,
        response: judgement.clone(),
    });

    Ok(AnnotationRecord {
        pair: pair.clone(),
        extracted: extract_label(&judgement),
        raw_response: judgement,
        transcript,
        run_id,
        failure: None,
    })
}
