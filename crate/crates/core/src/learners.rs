//! Feature views, the linear-probe weak learner / student, and a least-squares
//! regressor used as the gradient-boosting base learner.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{self, DatasetError, Label};
use crate::seed;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("feature view {source_tag:?}: {reason}")]
    InvalidView { source_tag: String, reason: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("no {what} for example id {id:?}")]
    MissingId { what: &'static str, id: String },
    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid probe config: {0}")]
    InvalidConfig(String),
    #[error("feature proportion must lie in (0, 1], got {0}")]
    InvalidProportion(f64),
    #[error("invalid soft label ({p0}, {p1})")]
    InvalidSoftLabel { p0: f64, p1: f64 },
    #[error("least-squares system is singular")]
    Singular,
    #[error("no training examples")]
    Empty,
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Probability pair over {incorrect, correct}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftLabel {
    pub p0: f64,
    pub p1: f64,
}

impl SoftLabel {
    pub fn new(p0: f64, p1: f64) -> Result<Self, LearnerError> {
        let in_unit = |p: f64| (0.0..=1.0).contains(&p);
        if !in_unit(p0) || !in_unit(p1) || (p0 + p1 - 1.0).abs() > 1e-9 {
            return Err(LearnerError::InvalidSoftLabel { p0, p1 });
        }
        Ok(SoftLabel { p0, p1 })
    }

    /// Panics if `p1` is outside [0, 1].
    pub fn from_p1(p1: f64) -> Self {
        assert!((0.0..=1.0).contains(&p1), "p1 out of range: {p1}");
        SoftLabel { p0: 1.0 - p1, p1 }
    }

    pub fn degenerate(label: Label) -> Self {
        match label {
            Label::Incorrect => SoftLabel { p0: 1.0, p1: 0.0 },
            Label::Correct => SoftLabel { p0: 0.0, p1: 1.0 },
        }
    }

    /// Argmax; a tie resolves to label 0.
    pub fn hard(&self) -> Label {
        if self.p1 > self.p0 {
            Label::Correct
        } else {
            Label::Incorrect
        }
    }

    pub fn confidence(&self) -> f64 {
        self.p0.max(self.p1)
    }
}

/// Per-example feature vectors tagged with where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureView {
    source: String,
    ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct FeatureLine {
    id: String,
    vector: Vec<f64>,
}

impl FeatureView {
    pub fn new(source: impl Into<String>, ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, LearnerError> {
        let source = source.into();
        let invalid = |reason: String| LearnerError::InvalidView {
            source_tag: source.clone(),
            reason,
        };
        if ids.len() != rows.len() {
            return Err(invalid(format!("{} ids but {} rows", ids.len(), rows.len())));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut index = HashMap::with_capacity(ids.len());
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, (id, row)) in ids.iter().zip(&rows).enumerate() {
            if row.len() != dim {
                return Err(invalid(format!(
                    "row {id:?} has dimension {} instead of {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!("row {id:?} has a non-finite entry")));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(invalid(format!("duplicate id {id:?}")));
            }
            data.extend_from_slice(row);
        }
        Ok(FeatureView {
            source,
            ids,
            dim,
            data,
            index,
        })
    }

    /// Loads a JSONL file of `{id, vector}` objects. Without an explicit tag
    /// the file stem becomes the source.
    pub fn load(path: &Path, source: Option<&str>) -> Result<Self, LearnerError> {
        let lines: Vec<FeatureLine> = dataset::read_jsonl(path)?;
        let tag = source.map(str::to_string).unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "features".to_string())
        });
        let (ids, rows) = lines.into_iter().map(|l| (l.id, l.vector)).unzip();
        FeatureView::new(tag, ids, rows)
    }

    pub fn save(&self, path: &Path) -> Result<(), LearnerError> {
        let io_err = |source| LearnerError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        for (i, id) in self.ids.iter().enumerate() {
            let line = FeatureLine {
                id: id.clone(),
                vector: self.row(i).to_vec(),
            };
            serde_json::to_writer(&mut w, &line).expect("feature line serializes");
            w.write_all(b"\n").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row_of(&self, id: &str) -> Option<&[f64]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1)).take(self.ids.len())
    }

    /// View restricted to the given ids, in the given order.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<FeatureView, LearnerError> {
        let mut rows = Vec::with_capacity(ids.len());
        let mut out_ids = Vec::with_capacity(ids.len());
        for id in ids {
            let id = id.as_ref();
            let row = self.row_of(id).ok_or_else(|| LearnerError::MissingId {
                what: "feature row",
                id: id.to_string(),
            })?;
            rows.push(row.to_vec());
            out_ids.push(id.to_string());
        }
        FeatureView::new(self.source.clone(), out_ids, rows)
    }

    /// View keeping only the listed dimensions, in the listed order.
    pub fn restrict_dims(&self, dims: &[usize], source: impl Into<String>) -> Result<FeatureView, LearnerError> {
        if let Some(&bad) = dims.iter().find(|&&d| d >= self.dim) {
            return Err(LearnerError::DimensionMismatch {
                expected: self.dim,
                actual: bad + 1,
            });
        }
        let rows = (0..self.len())
            .map(|i| {
                let row = self.row(i);
                dims.iter().map(|&d| row[d]).collect()
            })
            .collect();
        FeatureView::new(source, self.ids.clone(), rows)
    }
}

/// Named feature views over the same examples, e.g. one per hidden layer.
#[derive(Debug, Clone, Default)]
pub struct FeatureBank {
    views: BTreeMap<String, FeatureView>,
}

impl FeatureBank {
    pub fn new(views: impl IntoIterator<Item = FeatureView>) -> Self {
        FeatureBank {
            views: views.into_iter().map(|v| (v.source().to_string(), v)).collect(),
        }
    }

    pub fn get(&self, source: &str) -> Option<&FeatureView> {
        self.views.get(source)
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.views.keys().map(String::as_str)
    }

    /// Every view restricted to `ids`, in that order.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<FeatureBank, LearnerError> {
        Ok(FeatureBank {
            views: self
                .views
                .iter()
                .map(|(k, v)| Ok((k.clone(), v.subset(ids)?)))
                .collect::<Result<_, LearnerError>>()?,
        })
    }
}

/// Number of dimensions kept when sampling `proportion` of `dim`.
pub fn sampled_dim_count(dim: usize, proportion: f64) -> usize {
    // 0.3 * 10 evaluates to 3.0000000000000004; a small slack keeps ceil honest.
    ((proportion * dim as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Seeded uniform sample (without replacement) of `⌈proportion·d⌉`
/// dimensions, returned in ascending index order.
pub fn sample_feature_dims(dim: usize, proportion: f64, seed: u64) -> Result<Vec<usize>, LearnerError> {
    if !(proportion > 0.0 && proportion <= 1.0) {
        return Err(LearnerError::InvalidProportion(proportion));
    }
    let count = sampled_dim_count(dim, proportion);
    if count == 0 {
        return Err(LearnerError::InvalidProportion(proportion));
    }
    let mut dims = rand::seq::index::sample(&mut seed::rng(seed), dim, count).into_vec();
    dims.sort_unstable();
    Ok(dims)
}

pub fn select_feature_dims(view: &FeatureView, proportion: f64, seed: u64) -> Result<FeatureView, LearnerError> {
    let dims = sample_feature_dims(view.dim(), proportion, seed)?;
    let listed: Vec<String> = dims.iter().map(usize::to_string).collect();
    let tag = format!("{}[dims={}]", view.source(), listed.join(","));
    view.restrict_dims(&dims, tag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub early_stop: bool,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 2,
            batch_size: 32,
            learning_rate: 0.1,
            early_stop: true,
            patience: 1,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        if self.epochs < 1 {
            return Err(LearnerError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(LearnerError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearnerError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// One training row: features, target probability of label 1, sample weight.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub x: &'a [f64],
    pub target: f64,
    pub weight: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic classifier `p1 = sigmoid(w·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Gradient of the weighted mean cross-entropy over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearProbe {
    pub fn zeros(dim: usize) -> Self {
        LinearProbe {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn predict_row(&self, x: &[f64]) -> SoftLabel {
        SoftLabel::from_p1(sigmoid(self.logit(x)))
    }

    /// Weighted mean soft-target cross-entropy, normalised by total weight.
    pub fn loss(&self, batch: &[Example<'_>]) -> f64 {
        let total: f64 = batch.iter().map(|e| e.weight).sum();
        if total <= 0.0 {
            return 0.0;
        }
        batch
            .iter()
            .map(|e| {
                let z = self.logit(e.x);
                e.weight * (softplus(z) - e.target * z)
            })
            .sum::<f64>()
            / total
    }

    pub fn gradient(&self, batch: &[Example<'_>]) -> Gradient {
        let mut grad = Gradient {
            weights: vec![0.0; self.dim()],
            bias: 0.0,
        };
        let total: f64 = batch.iter().map(|e| e.weight).sum();
        if total <= 0.0 {
            return grad;
        }
        for e in batch {
            let residual = e.weight * (sigmoid(self.logit(e.x)) - e.target) / total;
            for (g, v) in grad.weights.iter_mut().zip(e.x) {
                *g += residual * v;
            }
            grad.bias += residual;
        }
        grad
    }

    fn check_dim(&self, dim: usize) -> Result<(), LearnerError> {
        if dim != self.dim() {
            return Err(LearnerError::DimensionMismatch {
                expected: self.dim(),
                actual: dim,
            });
        }
        Ok(())
    }
}

/// Soft-label predictions over some input substrate.
pub trait SoftClassifier<X: ?Sized> {
    fn predict_soft(&self, input: &X) -> Result<Vec<SoftLabel>, LearnerError>;

    fn predict_hard(&self, input: &X) -> Result<Vec<Label>, LearnerError> {
        Ok(self.predict_soft(input)?.iter().map(SoftLabel::hard).collect())
    }
}

impl SoftClassifier<FeatureView> for LinearProbe {
    fn predict_soft(&self, input: &FeatureView) -> Result<Vec<SoftLabel>, LearnerError> {
        predict_probe(self, input)
    }
}

pub fn predict_probe(probe: &LinearProbe, features: &FeatureView) -> Result<Vec<SoftLabel>, LearnerError> {
    probe.check_dim(features.dim())?;
    Ok(features.rows().map(|x| probe.predict_row(x)).collect())
}

/// A probe trained on a fixed subset of dimensions of a wider view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceProbe {
    pub dims: Vec<usize>,
    pub probe: LinearProbe,
}

impl SoftClassifier<FeatureView> for SubspaceProbe {
    fn predict_soft(&self, input: &FeatureView) -> Result<Vec<SoftLabel>, LearnerError> {
        predict_probe(&self.probe, &input.restrict_dims(&self.dims, input.source())?)
    }
}

/// A probe bound to one named view of a [`FeatureBank`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProbe {
    pub source: String,
    pub probe: LinearProbe,
}

impl SoftClassifier<FeatureBank> for LayerProbe {
    fn predict_soft(&self, input: &FeatureBank) -> Result<Vec<SoftLabel>, LearnerError> {
        let view = input.get(&self.source).ok_or_else(|| LearnerError::MissingId {
            what: "feature view",
            id: self.source.clone(),
        })?;
        predict_probe(&self.probe, view)
    }
}

/// A probe on one view of a [`FeatureBank`], optionally restricted to a
/// subset of that view's dimensions. Covers both hidden-layer and
/// feature-dimension bagging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankProbe {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    pub probe: LinearProbe,
}

impl SoftClassifier<FeatureBank> for BankProbe {
    fn predict_soft(&self, input: &FeatureBank) -> Result<Vec<SoftLabel>, LearnerError> {
        let view = input.get(&self.source).ok_or_else(|| LearnerError::MissingId {
            what: "feature view",
            id: self.source.clone(),
        })?;
        match &self.dims {
            Some(dims) => predict_probe(&self.probe, &view.restrict_dims(dims, view.source())?),
            None => predict_probe(&self.probe, view),
        }
    }
}

/// Outcome of a probe fit with its loss trace.
#[derive(Debug, Clone)]
pub struct ProbeFit {
    pub probe: LinearProbe,
    /// Full training-set loss before training, then after each epoch run.
    pub epoch_losses: Vec<f64>,
    /// Validation agreement with the (weak) validation labels per epoch.
    pub valid_agreement: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

fn agreement(probe: &LinearProbe, valid: &[Example<'_>]) -> f64 {
    if valid.is_empty() {
        return 0.0;
    }
    let hits = valid
        .iter()
        .filter(|e| probe.predict_row(e.x).hard() == SoftLabel::from_p1(e.target).hard())
        .count();
    hits as f64 / valid.len() as f64
}

/// Mini-batch gradient descent on the weighted soft-target cross-entropy.
///
/// Rows are reshuffled every epoch from a generator seeded by `config.seed`.
/// With early stopping and validation rows, the parameters with the best
/// validation agreement are returned and training halts once `patience`
/// consecutive epochs fail to improve it.
pub fn fit_probe(
    dim: usize,
    train: &[Example<'_>],
    config: &ProbeConfig,
    valid: Option<&[Example<'_>]>,
) -> Result<ProbeFit, LearnerError> {
    config.validate()?;
    if train.is_empty() {
        return Err(LearnerError::Empty);
    }
    for e in train.iter().chain(valid.unwrap_or(&[])) {
        if e.x.len() != dim {
            return Err(LearnerError::DimensionMismatch {
                expected: dim,
                actual: e.x.len(),
            });
        }
    }

    let mut rng = seed::rng(config.seed);
    let mut probe = LinearProbe::zeros(dim);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = vec![probe.loss(train)];
    let mut valid_agreement = Vec::new();
    let mut best: Option<(f64, LinearProbe, usize)> = None;
    let mut stale = 0;
    let monitor = valid.filter(|v| config.early_stop && !v.is_empty());
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i]));
            if !probe.loss(&batch).is_finite() {
                return Err(LearnerError::NonFiniteLoss { epoch, batch: b });
            }
            let grad = probe.gradient(&batch);
            for (w, g) in probe.weights.iter_mut().zip(&grad.weights) {
                *w -= config.learning_rate * g;
            }
            probe.bias -= config.learning_rate * grad.bias;
        }
        let loss = probe.loss(train);
        if !loss.is_finite() {
            return Err(LearnerError::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        epoch_losses.push(loss);

        if let Some(valid) = monitor {
            let acc = agreement(&probe, valid);
            valid_agreement.push(acc);
            match &best {
                Some((best_acc, _, _)) if acc <= *best_acc => {
                    stale += 1;
                    if stale >= config.patience {
                        break;
                    }
                }
                _ => {
                    best = Some((acc, probe.clone(), epoch));
                    stale = 0;
                }
            }
        }
    }

    let (probe, best_epoch) = match best {
        Some((_, p, e)) => (p, e),
        None => {
            let last = epoch_losses.len() - 1;
            (probe, last)
        }
    };
    Ok(ProbeFit {
        probe,
        epoch_losses,
        valid_agreement,
        best_epoch,
    })
}

fn examples_for<'a>(
    view: &'a FeatureView,
    targets: &HashMap<String, SoftLabel>,
) -> Result<Vec<Example<'a>>, LearnerError> {
    view.ids()
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let t = targets.get(id).ok_or_else(|| LearnerError::MissingId {
                what: "target",
                id: id.clone(),
            })?;
            Ok(Example {
                x: view.row(i),
                target: t.p1,
                weight: 1.0,
            })
        })
        .collect()
}

/// Trains a probe over every row of `features` against per-id soft targets.
pub fn train_probe(
    features: &FeatureView,
    targets: &HashMap<String, SoftLabel>,
    config: &ProbeConfig,
    valid: Option<(&FeatureView, &HashMap<String, SoftLabel>)>,
) -> Result<LinearProbe, LearnerError> {
    Ok(train_probe_report(features, targets, config, valid)?.probe)
}

pub fn train_probe_report(
    features: &FeatureView,
    targets: &HashMap<String, SoftLabel>,
    config: &ProbeConfig,
    valid: Option<(&FeatureView, &HashMap<String, SoftLabel>)>,
) -> Result<ProbeFit, LearnerError> {
    let train = examples_for(features, targets)?;
    let valid_rows = match valid {
        Some((view, labels)) => {
            if view.dim() != features.dim() {
                return Err(LearnerError::DimensionMismatch {
                    expected: features.dim(),
                    actual: view.dim(),
                });
            }
            Some(examples_for(view, labels)?)
        }
        None => None,
    };
    fit_probe(features.dim(), &train, config, valid_rows.as_deref())
}

/// Trains on the listed ids (duplicates allowed, e.g. a bootstrap bag) with
/// optional per-row weights aligned to `ids`.
pub fn train_probe_on_ids<S: AsRef<str>>(
    features: &FeatureView,
    ids: &[S],
    targets: &HashMap<String, SoftLabel>,
    weights: Option<&[f64]>,
    config: &ProbeConfig,
) -> Result<LinearProbe, LearnerError> {
    let mut rows = Vec::with_capacity(ids.len());
    for (k, id) in ids.iter().enumerate() {
        let id = id.as_ref();
        let x = features.row_of(id).ok_or_else(|| LearnerError::MissingId {
            what: "feature row",
            id: id.to_string(),
        })?;
        let t = targets.get(id).ok_or_else(|| LearnerError::MissingId {
            what: "target",
            id: id.to_string(),
        })?;
        rows.push(Example {
            x,
            target: t.p1,
            weight: weights.map_or(1.0, |w| w[k]),
        });
    }
    Ok(fit_probe(features.dim(), &rows, config, None)?.probe)
}

/// Ordinary least squares with intercept (tiny ridge on the weights).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegressor {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearRegressor {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.intercept
    }

    pub fn predict(&self, view: &FeatureView) -> Result<Vec<f64>, LearnerError> {
        if view.dim() != self.weights.len() {
            return Err(LearnerError::DimensionMismatch {
                expected: self.weights.len(),
                actual: view.dim(),
            });
        }
        Ok(view.rows().map(|x| self.predict_row(x)).collect())
    }
}

pub fn fit_least_squares(rows: &[&[f64]], targets: &[f64], ridge: f64) -> Result<LinearRegressor, LearnerError> {
    if rows.is_empty() {
        return Err(LearnerError::Empty);
    }
    let dim = rows[0].len();
    let n = rows.len();
    let design = DMatrix::from_fn(n, dim + 1, |i, j| if j == dim { 1.0 } else { rows[i][j] });
    let y = DVector::from_column_slice(targets);
    let mut gram = design.transpose() * &design;
    for j in 0..dim {
        gram[(j, j)] += ridge;
    }
    let rhs = design.transpose() * y;
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|_| LearnerError::Singular)?,
    };
    Ok(LinearRegressor {
        weights: beta.rows(0, dim).iter().copied().collect(),
        intercept: beta[dim],
    })
}

/// Hard-label targets for every id in `labels`.
pub fn hard_targets<'a>(labels: impl IntoIterator<Item = (&'a str, Label)>) -> HashMap<String, SoftLabel> {
    labels
        .into_iter()
        .map(|(id, l)| (id.to_string(), SoftLabel::degenerate(l)))
        .collect()
}

/// Ids that appear in both the view and the target map, in view order.
pub fn covered_ids(view: &FeatureView, targets: &HashMap<String, SoftLabel>) -> Vec<String> {
    let wanted: HashSet<&str> = targets.keys().map(String::as_str).collect();
    view.ids()
        .iter()
        .filter(|id| wanted.contains(id.as_str()))
        .cloned()
        .collect()
}
