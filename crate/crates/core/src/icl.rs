//! In-context weak-to-strong learning: shots labeled by a weak teacher are
//! placed in the prompt of a strong model, which then labels the query.
//!
//! Shots are chosen at random (class-balanced) or by one of three retrievers:
//! BM25 over question+answer text, Top-K by embedding cosine, or VoteK, which
//! trades similarity for diversity on a neighbor vote graph.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{prompt_digest, Backend, BackendError, GenerationParams};
use crate::concurrency::{map_bounded, DEFAULT_MAX_IN_FLIGHT};
use crate::dataset::{BinaryPair, Label};
use crate::learners::{LearnerError, SoftLabel};
use crate::seed;
use crate::templates::{compose, TemplateError, TemplateSet};
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum IclError {
    #[error("shot {pair_id} has no confidence but the prompt style needs one")]
    MissingConfidence { pair_id: String },
    #[error("confidence {value} of shot {pair_id} is outside [0, 1]")]
    InvalidConfidence { pair_id: String, value: f64 },
    #[error("cannot pick {k} balanced shots: {available0} labeled 0 and {available1} labeled 1 with at most {cap} per class")]
    Infeasible {
        k: usize,
        cap: usize,
        available0: usize,
        available1: usize,
    },
    #[error("retriever params: {0}")]
    InvalidParams(String),
    #[error("zero vector for {0}")]
    ZeroVector(String),
    #[error("vector for {id} has dimension {got}, expected {expected}")]
    Dimension { id: String, expected: usize, got: usize },
    #[error("cannot read a 0/1 label from {0:?}")]
    Unparseable(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    #[default]
    Basic,
    Confidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrieverKind {
    #[default]
    Random,
    Bm25,
    Topk,
    Votek,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieverParams {
    pub k1: f64,
    pub b: f64,
    pub rho: f64,
    pub neighbors: usize,
}

impl Default for RetrieverParams {
    fn default() -> Self {
        RetrieverParams {
            k1: 1.5,
            b: 0.75,
            rho: 10.0,
            neighbors: 5,
        }
    }
}

impl RetrieverParams {
    pub fn validate(&self) -> Result<(), IclError> {
        let bad = |m: &str| Err(IclError::InvalidParams(m.to_string()));
        if self.k1.is_nan() || self.k1 <= 0.0 {
            return bad("k1 must be positive");
        }
        if !(0.0..=1.0).contains(&self.b) {
            return bad("b must lie in [0, 1]");
        }
        if self.rho.is_nan() || self.rho <= 1.0 {
            return bad("rho must exceed 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IclConfig {
    pub k: usize,
    pub style: PromptStyle,
    pub retriever: RetrieverKind,
    pub params: RetrieverParams,
    /// Cap each pseudo-label class at ceil(k/2) shots.
    pub balanced: bool,
    /// Put the best-ranked shot first; when false it sits next to the query.
    pub most_similar_first: bool,
    pub seed: u64,
    pub max_in_flight: usize,
    pub generation: GenerationParams,
}

impl Default for IclConfig {
    fn default() -> Self {
        IclConfig {
            k: 5,
            style: PromptStyle::Basic,
            retriever: RetrieverKind::Random,
            params: RetrieverParams::default(),
            balanced: true,
            most_similar_first: true,
            seed: 0,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            generation: GenerationParams {
                temperature: 0.0,
                max_tokens: 1,
                ..GenerationParams::default()
            },
        }
    }
}

/// A demonstration: a pair with the weak teacher's label and, optionally,
/// the teacher's confidence in that label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub pair: BinaryPair,
    pub pseudo_label: Label,
    pub confidence: Option<f64>,
}

impl Shot {
    /// Shot labeled by a soft teacher; confidence is the larger probability.
    pub fn from_soft(pair: BinaryPair, soft: SoftLabel) -> Self {
        Shot {
            pair,
            pseudo_label: soft.hard(),
            confidence: Some(soft.confidence()),
        }
    }
}

/// Two decimals, halves rounded up. Rounding goes through integer
/// micro-units so values such as 0.875 are not lost to binary error.
pub fn format_confidence(c: f64) -> String {
    let micro = (c * 1e6).round() as i64;
    let hundredths = (micro + 5_000).div_euclid(10_000);
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

/// Header, one block per shot, then the unlabeled query.
pub fn build_prompt(
    templates: &TemplateSet,
    shots: &[Shot],
    query: &BinaryPair,
    style: PromptStyle,
) -> Result<String, IclError> {
    let mut blocks = Vec::with_capacity(shots.len());
    for shot in shots {
        let label = shot.pseudo_label.as_u8().to_string();
        let q = shot.pair.question.as_str();
        let a = shot.pair.answer.as_str();
        let block = match style {
            PromptStyle::Basic => templates.render("icl_shot", &[("question", q), ("answer", a), ("label", &label)])?,
            PromptStyle::Confidence => {
                let c = shot.confidence.ok_or_else(|| IclError::MissingConfidence {
                    pair_id: shot.pair.id.clone(),
                })?;
                if !(0.0..=1.0).contains(&c) {
                    return Err(IclError::InvalidConfidence {
                        pair_id: shot.pair.id.clone(),
                        value: c,
                    });
                }
                let c = format_confidence(c);
                templates.render(
                    "icl_confidence_shot",
                    &[("question", q), ("answer", a), ("label", &label), ("confidence", &c)],
                )?
            }
        };
        blocks.push(block);
    }
    let header = match style {
        PromptStyle::Basic => templates.render("icl_basic_header", &[])?,
        PromptStyle::Confidence => templates.render("icl_confidence_header", &[])?,
    };
    let query = templates.render("icl_query", &[("question", &query.question), ("answer", &query.answer)])?;
    Ok(compose(Some(&header), &blocks, &query))
}

/// Per-class cap for `k` shots over two classes.
pub fn class_cap(k: usize) -> usize {
    k.div_ceil(2)
}

/// Takes candidates in order, skipping any whose class is already at the
/// cap, until `k` are accepted. Returns indices into `labels`.
fn take_capped(order: impl IntoIterator<Item = usize>, labels: &[Label], k: usize) -> Result<Vec<usize>, IclError> {
    let cap = class_cap(k);
    let available1 = labels.iter().filter(|&&l| l == Label::Correct).count();
    let available0 = labels.len() - available1;
    if available0.min(cap) + available1.min(cap) < k {
        return Err(IclError::Infeasible {
            k,
            cap,
            available0,
            available1,
        });
    }
    let mut counts = [0usize; 2];
    let mut out = Vec::with_capacity(k);
    for i in order {
        if out.len() == k {
            break;
        }
        let c = labels[i].as_u8() as usize;
        if counts[c] < cap {
            counts[c] += 1;
            out.push(i);
        }
    }
    Ok(out)
}

/// Draws shots one at a time without replacement, rejecting a draw whose
/// pseudo-label class already holds ceil(k/2) shots. Output is draw order.
pub fn sample_balanced_shots(pool: &[Shot], k: usize, seed: u64) -> Result<Vec<Shot>, IclError> {
    let labels: Vec<Label> = pool.iter().map(|s| s.pseudo_label).collect();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    Ok(take_capped(order, &labels, k)?
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

fn by_score_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

/// Okapi BM25 over a fixed corpus.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    ids: Vec<String>,
    term_freqs: Vec<HashMap<String, usize>>,
    lengths: Vec<usize>,
    doc_freq: HashMap<String, usize>,
    avgdl: f64,
    params: RetrieverParams,
}

impl Bm25Index {
    pub fn new<S: AsRef<str>>(corpus: &[(S, S)], params: RetrieverParams) -> Self {
        let mut ids = Vec::with_capacity(corpus.len());
        let mut term_freqs = Vec::with_capacity(corpus.len());
        let mut lengths = Vec::with_capacity(corpus.len());
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for (id, text) in corpus {
            let tokens = tokenize(text.as_ref());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            ids.push(id.as_ref().to_string());
            lengths.push(tokens.len());
            term_freqs.push(tf);
        }
        let avgdl = if ids.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / ids.len() as f64
        };
        Bm25Index {
            ids,
            term_freqs,
            lengths,
            doc_freq,
            avgdl,
            params,
        }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.ids.len() as f64;
        let nt = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        ((n - nt + 0.5) / (nt + 0.5) + 1.0).ln()
    }

    /// Score of every document in corpus order. Each distinct query term
    /// counts once.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let RetrieverParams { k1, b, .. } = self.params;
        let idfs: Vec<(&String, f64)> = terms.iter().map(|t| (t, self.idf(t))).collect();
        (0..self.ids.len())
            .map(|d| {
                let norm = if self.avgdl > 0.0 {
                    1.0 - b + b * self.lengths[d] as f64 / self.avgdl
                } else {
                    1.0
                };
                let mut score = 0.0;
                for (t, idf) in &idfs {
                    if let Some(&f) = self.term_freqs[d].get(*t) {
                        let f = f as f64;
                        score += idf * f * (k1 + 1.0) / (f + k1 * norm);
                    }
                }
                score
            })
            .collect()
    }

    /// Best `topn` documents, descending by score, ties by id.
    pub fn rank(&self, query: &str, topn: usize) -> Vec<(String, f64)> {
        let mut ranked: Vec<(String, f64)> = self.ids.iter().cloned().zip(self.scores(query)).collect();
        ranked.sort_by(by_score_then_id);
        ranked.truncate(topn);
        ranked
    }
}

pub fn bm25_rank<S: AsRef<str>>(
    query: &str,
    corpus: &[(S, S)],
    params: RetrieverParams,
    topn: usize,
) -> Vec<(String, f64)> {
    Bm25Index::new(corpus, params).rank(query, topn)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_vectors<S: AsRef<str>>(dim: usize, pool: &[(S, Vec<f64>)]) -> Result<Vec<f64>, IclError> {
    pool.iter()
        .map(|(id, v)| {
            if v.len() != dim {
                return Err(IclError::Dimension {
                    id: id.as_ref().to_string(),
                    expected: dim,
                    got: v.len(),
                });
            }
            let n = norm(v);
            if n == 0.0 {
                return Err(IclError::ZeroVector(id.as_ref().to_string()));
            }
            Ok(n)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pool entries ranked by cosine similarity to the query; the best `k` are
/// returned, ties by id.
pub fn topk_retrieve<S: AsRef<str>>(
    query: &[f64],
    pool: &[(S, Vec<f64>)],
    k: usize,
) -> Result<Vec<(String, f64)>, IclError> {
    let qn = norm(query);
    if qn == 0.0 {
        return Err(IclError::ZeroVector("query".into()));
    }
    let norms = check_vectors(query.len(), pool)?;
    let mut ranked: Vec<(String, f64)> = pool
        .iter()
        .zip(norms)
        .map(|((id, v), n)| (id.as_ref().to_string(), dot(query, v) / (qn * n)))
        .collect();
    ranked.sort_by(by_score_then_id);
    ranked.truncate(k);
    Ok(ranked)
}

/// Greedy VoteK. Each point votes for its `neighbors` nearest other points.
/// A candidate scores the sum over its voters v of rho^-(number of already
/// selected points among v's neighbors), so areas already covered count for
/// less. Larger rho pushes picks further apart. `eligible` can veto a
/// candidate given the picks so far.
fn votek_greedy<S: AsRef<str>>(
    pool: &[(S, Vec<f64>)],
    k: usize,
    params: &RetrieverParams,
    mut eligible: impl FnMut(usize, &[usize]) -> bool,
) -> Result<Vec<usize>, IclError> {
    params.validate()?;
    if k > pool.len() {
        return Err(IclError::InvalidParams(format!(
            "k = {k} exceeds pool size {}",
            pool.len()
        )));
    }
    if pool.is_empty() {
        return Ok(Vec::new());
    }
    let norms = check_vectors(pool[0].1.len(), pool)?;
    let n = pool.len();
    let id = |i: usize| pool[i].0.as_ref();
    let mut neighbors: Vec<Vec<usize>> = Vec::with_capacity(n);
    for v in 0..n {
        let mut sims: Vec<(usize, f64)> = (0..n)
            .filter(|&u| u != v)
            .map(|u| (u, dot(&pool[v].1, &pool[u].1) / (norms[v] * norms[u])))
            .collect();
        sims.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| id(a.0).cmp(id(b.0)))
        });
        sims.truncate(params.neighbors);
        neighbors.push(sims.into_iter().map(|(u, _)| u).collect());
    }
    let mut voters: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, ns) in neighbors.iter().enumerate() {
        for &u in ns {
            voters[u].push(v);
        }
    }
    let mut selected = vec![false; n];
    let mut covered = vec![0i32; n];
    let mut picks = Vec::with_capacity(k);
    while picks.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for u in 0..n {
            if selected[u] || !eligible(u, &picks) {
                continue;
            }
            let score: f64 = voters[u].iter().map(|&v| params.rho.powi(-covered[v])).sum();
            let better = match best {
                None => true,
                Some((b, s)) => score > s || (score == s && id(u) < id(b)),
            };
            if better {
                best = Some((u, score));
            }
        }
        let Some((u, _)) = best else { break };
        selected[u] = true;
        picks.push(u);
        for (v, ns) in neighbors.iter().enumerate() {
            if ns.contains(&u) {
                covered[v] += 1;
            }
        }
    }
    Ok(picks)
}

/// `k` ids chosen by VoteK, in greedy order.
pub fn votek_select<S: AsRef<str>>(
    pool: &[(S, Vec<f64>)],
    k: usize,
    params: &RetrieverParams,
) -> Result<Vec<String>, IclError> {
    Ok(votek_greedy(pool, k, params, |_, _| true)?
        .into_iter()
        .map(|i| pool[i].0.as_ref().to_string())
        .collect())
}

/// Soft label from the model's reply. Uses next-token probabilities of "0"
/// and "1" when the backend reports them, otherwise reads the first token of
/// the text as a hard 0 or 1.
pub fn icl_predict(backend: &dyn Backend, prompt: &str, params: &GenerationParams) -> Result<SoftLabel, IclError> {
    let reply = backend.generate(prompt, params)?;
    if let Some(scores) = &reply.token_scores {
        let s0 = scores.get("0").copied().unwrap_or(0.0);
        let s1 = scores.get("1").copied().unwrap_or(0.0);
        if s0 + s1 > 0.0 {
            return Ok(SoftLabel::new(s0 / (s0 + s1), s1 / (s0 + s1))?);
        }
    }
    let first = reply
        .text
        .split_whitespace()
        .next()
        .map(|t| t.trim_end_matches(|c: char| c.is_ascii_punctuation()))
        .unwrap_or("");
    match first {
        "0" => Ok(SoftLabel::degenerate(Label::Incorrect)),
        "1" => Ok(SoftLabel::degenerate(Label::Correct)),
        _ => Err(IclError::Unparseable(reply.text)),
    }
}

/// Shot selection for one configuration over a fixed pool.
pub struct ShotSelector<'a> {
    pool: &'a [Shot],
    labels: Vec<Label>,
    cfg: &'a IclConfig,
    bm25: Option<Bm25Index>,
    vectors: Option<Vec<(String, Vec<f64>)>>,
    votek: Option<Vec<usize>>,
}

impl<'a> ShotSelector<'a> {
    /// Embeds the pool when the retriever needs vectors.
    pub fn new(pool: &'a [Shot], cfg: &'a IclConfig, embedder: &dyn Backend) -> Result<Self, IclError> {
        cfg.params.validate()?;
        let labels = pool.iter().map(|s| s.pseudo_label).collect();
        let mut sel = ShotSelector {
            pool,
            labels,
            cfg,
            bm25: None,
            vectors: None,
            votek: None,
        };
        match cfg.retriever {
            RetrieverKind::Random => {}
            RetrieverKind::Bm25 => {
                let corpus: Vec<(String, String)> = pool
                    .iter()
                    .map(|s| (s.pair.id.clone(), s.pair.retrieval_text()))
                    .collect();
                sel.bm25 = Some(Bm25Index::new(&corpus, cfg.params));
            }
            RetrieverKind::Topk | RetrieverKind::Votek => {
                let texts: Vec<String> = pool.iter().map(|s| s.pair.retrieval_text()).collect();
                let vecs = map_bounded(&texts, cfg.max_in_flight, |_, t| embedder.embed(t))
                    .into_iter()
                    .collect::<Result<Vec<_>, _>>()?;
                sel.vectors = Some(pool.iter().map(|s| s.pair.id.clone()).zip(vecs).collect());
            }
        }
        if cfg.retriever == RetrieverKind::Votek {
            let vectors = sel.vectors.as_ref().expect("embedded above");
            let k = cfg.k;
            let labels = &sel.labels;
            let balanced = cfg.balanced;
            if balanced {
                // Fails early with the same message as the other retrievers.
                take_capped(0..labels.len(), labels, k)?;
            }
            let cap = class_cap(k);
            let picks = votek_greedy(vectors, k, &cfg.params, |u, picks| {
                !balanced || picks.iter().filter(|&&p| labels[p] == labels[u]).count() < cap
            })?;
            sel.votek = Some(picks);
        }
        Ok(sel)
    }

    fn finish(&self, ranked: impl IntoIterator<Item = usize>) -> Result<Vec<Shot>, IclError> {
        let k = self.cfg.k;
        let mut picks: Vec<usize> = if self.cfg.balanced {
            take_capped(ranked, &self.labels, k)?
        } else {
            let p: Vec<usize> = ranked.into_iter().take(k).collect();
            if p.len() < k {
                return Err(IclError::InvalidParams(format!(
                    "k = {k} exceeds pool size {}",
                    self.pool.len()
                )));
            }
            p
        };
        if !self.cfg.most_similar_first {
            picks.reverse();
        }
        Ok(picks.into_iter().map(|i| self.pool[i].clone()).collect())
    }

    pub fn select(&self, query: &BinaryPair, embedder: &dyn Backend) -> Result<Vec<Shot>, IclError> {
        let position: HashMap<&str, usize> = match self.cfg.retriever {
            RetrieverKind::Bm25 | RetrieverKind::Topk => self
                .pool
                .iter()
                .enumerate()
                .map(|(i, s)| (s.pair.id.as_str(), i))
                .collect(),
            _ => HashMap::new(),
        };
        match self.cfg.retriever {
            RetrieverKind::Random => {
                let seed = seed::derive(self.cfg.seed, &query.id);
                let mut order: Vec<usize> = (0..self.pool.len()).collect();
                order.shuffle(&mut seed::rng(seed));
                // Random draws are already in draw order; no similarity to flip.
                let k = self.cfg.k;
                let picks = if self.cfg.balanced {
                    take_capped(order, &self.labels, k)?
                } else {
                    order.into_iter().take(k).collect()
                };
                Ok(picks.into_iter().map(|i| self.pool[i].clone()).collect())
            }
            RetrieverKind::Bm25 => {
                let index = self.bm25.as_ref().expect("built in new");
                let ranked = index.rank(&query.retrieval_text(), self.pool.len());
                self.finish(ranked.iter().map(|(id, _)| position[id.as_str()]))
            }
            RetrieverKind::Topk => {
                let q = embedder.embed(&query.retrieval_text())?;
                let pool = self.vectors.as_ref().expect("embedded in new");
                let ranked = topk_retrieve(&q, pool, pool.len())?;
                self.finish(ranked.iter().map(|(id, _)| position[id.as_str()]))
            }
            RetrieverKind::Votek => self.finish(self.votek.clone().expect("selected in new")),
        }
    }
}

/// One line of an ICL predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclPrediction {
    pub pair_id: String,
    pub p0: Option<f64>,
    pub p1: Option<f64>,
    pub label: Option<Label>,
    pub prompt_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLine {
    pub prompt_ref: String,
    pub pair_id: String,
    pub prompt: String,
}

/// Selects shots, builds the prompt and queries the model for every test
/// pair. Unreadable replies become predictions without a label.
pub fn run_icl(
    queries: &[BinaryPair],
    pool: &[Shot],
    cfg: &IclConfig,
    model: &dyn Backend,
    embedder: &dyn Backend,
    templates: &TemplateSet,
) -> Result<(Vec<IclPrediction>, Vec<PromptLine>), IclError> {
    let selector = ShotSelector::new(pool, cfg, embedder)?;
    let prompts = map_bounded(queries, cfg.max_in_flight, |_, q| -> Result<String, IclError> {
        let shots = selector.select(q, embedder)?;
        build_prompt(templates, &shots, q, cfg.style)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let preds = map_bounded(&prompts, cfg.max_in_flight, |i, prompt| {
        let prompt_ref = prompt_digest(prompt);
        let pair_id = queries[i].id.clone();
        match icl_predict(model, prompt, &cfg.generation) {
            Ok(s) => Ok(IclPrediction {
                pair_id,
                p0: Some(s.p0),
                p1: Some(s.p1),
                label: Some(s.hard()),
                prompt_ref,
                error: None,
            }),
            Err(e @ IclError::Unparseable(_)) => Ok(IclPrediction {
                pair_id,
                p0: None,
                p1: None,
                label: None,
                prompt_ref,
                error: Some(e.to_string()),
            }),
            Err(e) => Err(e),
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let lines = queries
        .iter()
        .zip(prompts)
        .map(|(q, prompt)| PromptLine {
            prompt_ref: prompt_digest(&prompt),
            pair_id: q.id.clone(),
            prompt,
        })
        .collect();
    Ok((preds, lines))
}
