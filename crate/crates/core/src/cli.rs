//! The `w2sg` command line: one subcommand per pipeline stage, configured by
//! a TOML file plus flag overrides (flags win).
//!
//! Every command writes `manifest.json` into its output directory with the
//! resolved config, its fingerprint and a digest of every file written.
//! Exit codes: 0 success, 2 config error, 3 data error, 4 backend failure,
//! 5 failure cap exceeded.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backends::{
    build_backend, Backend, BackendDescriptor, BackendError, FixtureEntry, RecordingBackend, ScriptedBackend,
};
use crate::dataset::{self, BinaryPair, DatasetError, Label, SplitBundle, SplitSizes};
use crate::ensemble::{
    self, train_adaboost, train_bagging, train_gradient_boost, BaggingConfig, EnsembleError, EnsembleManifest,
    ManifestMember, Sampler, Vote, Voting,
};
use crate::evalreport::{self, emit_report, EvalError, EvalResult, ReportFormat, W2SReport};
use crate::icl::{self, IclConfig, IclError, PromptStyle, RetrieverKind, Shot};
use crate::learners::{
    fit_least_squares, hard_targets, predict_probe, sample_feature_dims, train_probe_on_ids, train_probe_report,
    BankProbe, FeatureBank, FeatureView, LearnerError, ProbeConfig, SoftLabel,
};
use crate::oversight::{
    self, balance_by, generate_context_examples, interaction_annotate, multi_run_vote, run_debate, AnnotationLine,
    DebateDemos, OversightError, SoConfig,
};
use crate::seed;
use crate::templates::{TemplateError, TemplateSet};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;
pub const EXIT_CAP: i32 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<LearnerError> for CliError {
    fn from(e: LearnerError) -> Self {
        match e {
            LearnerError::InvalidConfig(_) | LearnerError::InvalidProportion(_) => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::InvalidConfig(_) => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Config(_) => CliError::config(e.to_string()),
            BackendError::Fixture(_) | BackendError::DuplicateDigest { .. } => CliError::data(e.to_string()),
            _ => CliError {
                code: EXIT_BACKEND,
                message: e.to_string(),
            },
        }
    }
}

impl From<TemplateError> for CliError {
    fn from(e: TemplateError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<OversightError> for CliError {
    fn from(e: OversightError) -> Self {
        let code = match &e {
            OversightError::InvalidConfig(_) | OversightError::Template(_) => EXIT_CONFIG,
            OversightError::FailureCap { .. } => EXIT_CAP,
            OversightError::ContextGeneration { .. } => EXIT_BACKEND,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<IclError> for CliError {
    fn from(e: IclError) -> Self {
        let code = match &e {
            IclError::MissingConfidence { .. } | IclError::InvalidParams(_) | IclError::Template(_) => EXIT_CONFIG,
            IclError::Backend(b) => return CliError::from(BackendError::InvalidResponse(b.to_string())),
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::data(e.to_string())
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "w2sg", version, about = "Weak-to-strong generalization experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; overrides the config and every module seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Concurrent backend calls per stage.
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
    /// Replay every backend from this fixture file instead of the network.
    #[arg(long, global = true)]
    pub fixture: Option<PathBuf>,
    /// With --fixture: any prompt missing from the fixture fails the run.
    #[arg(long, global = true)]
    pub strict_fixture: bool,
    /// Record every backend exchange into this fixture file.
    #[arg(long, global = true)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert raw multi-choice questions into binary splits.
    Dataset {
        #[command(subcommand)]
        cmd: DatasetCmd,
    },
    /// Train weak teachers on train1 and label train2/valid/test.
    Ensemble {
        #[command(subcommand)]
        cmd: EnsembleCmd,
    },
    /// Annotate splits with interaction or debate oversight.
    Oversee {
        #[command(subcommand)]
        cmd: OverseeCmd,
    },
    /// Train a probe student on weak labels and report against gold.
    Student {
        #[command(subcommand)]
        cmd: StudentCmd,
    },
    /// In-context learning with weakly labeled shots.
    Icl {
        #[command(subcommand)]
        cmd: IclCmd,
    },
    /// Compare two prediction files on the test split.
    Eval {
        #[command(subcommand)]
        cmd: EvalCmd,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    Prepare {
        /// Raw questions JSONL.
        #[arg(long)]
        raw: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EnsembleCmd {
    Run {
        /// bagging, adaboost or gradboost.
        #[arg(long, value_parser = parse_enum::<EnsembleMode>)]
        mode: Option<EnsembleMode>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct OverseeArgs {
    /// Independent runs combined by hard vote.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Debate rounds.
    #[arg(long)]
    pub rounds: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum OverseeCmd {
    Interact(OverseeArgs),
    Debate(OverseeArgs),
}

#[derive(Debug, Subcommand)]
pub enum StudentCmd {
    Train {
        /// Directory with train2/valid/test weak-label files.
        #[arg(long)]
        weak_labels: Option<PathBuf>,
        /// Train on gold labels instead (upper-bound reference).
        #[arg(long)]
        oracle: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum IclCmd {
    Run {
        /// random, bm25, topk or votek.
        #[arg(long, value_parser = parse_enum::<RetrieverKind>)]
        retriever: Option<RetrieverKind>,
        /// basic or confidence.
        #[arg(long, value_parser = parse_enum::<PromptStyle>)]
        style: Option<PromptStyle>,
        /// Shots per prompt.
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    Report {
        /// Weak-label or prediction file for the test split.
        #[arg(long)]
        weak: Option<PathBuf>,
        /// Strong-side prediction file for the test split.
        #[arg(long)]
        strong: Option<PathBuf>,
        /// json or csv.
        #[arg(long, value_parser = parse_enum::<ReportFormat>)]
        format: Option<ReportFormat>,
    },
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    #[default]
    Bagging,
    Adaboost,
    Gradboost,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub raw: Option<PathBuf>,
    /// Directory holding train1/train2/valid/test JSONL files.
    pub splits: Option<PathBuf>,
    pub sizes: SplitSizes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub mode: EnsembleMode,
    /// Feature files for the weak model; several files are treated as
    /// hidden layers and assigned to bagging members round-robin.
    pub features: Vec<PathBuf>,
    /// Bagging sampler; a sample size of 0 means |train1|.
    pub sampler: Sampler,
    pub num_models: usize,
    pub voting: Voting,
    /// Fraction of feature dimensions each weak teacher sees.
    pub feature_proportion: Option<f64>,
    /// Boosting rounds.
    pub rounds: usize,
    pub shrinkage: f64,
    pub ridge: f64,
    pub probe: ProbeConfig,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            mode: EnsembleMode::Bagging,
            features: Vec::new(),
            sampler: Sampler::Bootstrap { n: 0 },
            num_models: 5,
            voting: Voting::Soft,
            feature_proportion: None,
            rounds: 3,
            shrinkage: ensemble::DEFAULT_SHRINKAGE,
            ridge: 1e-6,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OversightSection {
    /// Directory of template overrides.
    pub templates: Option<PathBuf>,
    /// Debate demonstrations (JSON).
    pub demos: Option<PathBuf>,
    /// Splits to annotate.
    pub splits: Vec<String>,
    #[serde(flatten)]
    pub protocol: SoConfig,
}

impl Default for OversightSection {
    fn default() -> Self {
        OversightSection {
            templates: None,
            demos: None,
            splits: vec!["train2".into(), "valid".into(), "test".into()],
            protocol: SoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentSection {
    pub features: Option<PathBuf>,
    pub weak_labels: Option<PathBuf>,
    pub oracle: bool,
    pub probe: ProbeConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IclSection {
    /// Weak labels for the shot pool (pairs come from train2).
    pub pool: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    #[serde(flatten)]
    pub run: IclConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub weak: Option<PathBuf>,
    pub strong: Option<PathBuf>,
    pub format: ReportFormat,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            weak: None,
            strong: None,
            format: ReportFormat::Json,
        }
    }
}

/// Everything a command may need. Unused sections are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dataset: DatasetSection,
    pub ensemble: EnsembleSection,
    pub oversight: OversightSection,
    pub student: StudentSection,
    pub icl: IclSection,
    pub eval: EvalSection,
    /// Backend per role: weak, aux, aux_a, aux_b, student, embed.
    pub backends: BTreeMap<String, BackendDescriptor>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))?;
        cfg.rebase(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    /// Parses TOML, rejecting unknown keys in every section.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        // Sections with flattened parts cannot use serde's unknown-field check.
        let raw: toml::Table = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        let known =
            |v: Value| -> Vec<String> { v.as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default() };
        for (name, allowed) in [
            (
                "oversight",
                known(serde_json::to_value(OversightSection::default()).expect("serializes")),
            ),
            (
                "icl",
                known(serde_json::to_value(IclSection::default()).expect("serializes")),
            ),
        ] {
            if let Some(toml::Value::Table(t)) = raw.get(name) {
                if let Some(k) = t.keys().find(|k| !allowed.contains(k)) {
                    return Err(CliError::config(format!("unknown key `{k}` in [{name}]")));
                }
            }
        }
        Ok(cfg)
    }

    /// Makes relative paths relative to `base` (the config file's directory).
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p);
            }
        };
        fix_opt(&mut self.out);
        fix_opt(&mut self.dataset.raw);
        fix_opt(&mut self.dataset.splits);
        self.ensemble.features.iter_mut().for_each(fix);
        fix_opt(&mut self.oversight.templates);
        fix_opt(&mut self.oversight.demos);
        fix_opt(&mut self.student.features);
        fix_opt(&mut self.student.weak_labels);
        fix_opt(&mut self.icl.pool);
        fix_opt(&mut self.icl.templates);
        fix_opt(&mut self.eval.weak);
        fix_opt(&mut self.eval.strong);
        for b in self.backends.values_mut() {
            fix_opt(&mut b.fixture);
        }
    }

    /// Applies flag overrides and propagates the global seed and in-flight
    /// limit into every section.
    pub fn resolve(mut self, common: &CommonArgs) -> Result<Self, CliError> {
        if let Some(s) = common.seed {
            self.seed = Some(s);
        }
        if let Some(o) = &common.out {
            self.out = Some(o.clone());
        }
        let seed = self
            .seed
            .ok_or_else(|| CliError::config("a seed is required (--seed or `seed` in the config)"))?;
        if self.out.is_none() {
            return Err(CliError::config(
                "an output directory is required (--out or `out` in the config)",
            ));
        }
        self.ensemble.probe.seed = seed;
        self.student.probe.seed = seed;
        self.oversight.protocol.seed = seed;
        self.icl.run.seed = seed;
        if let Some(m) = common.max_in_flight {
            if m == 0 {
                return Err(CliError::config("--max-in-flight must be at least 1"));
            }
            self.oversight.protocol.max_in_flight = m;
            self.icl.run.max_in_flight = m;
            for b in self.backends.values_mut() {
                b.max_in_flight = m;
            }
        }
        if common.fixture.is_some() && common.strict_fixture {
            self.oversight.protocol.failure_cap = 0.0;
        }
        Ok(self)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved config has a seed")
    }

    pub fn out(&self) -> &Path {
        self.out.as_deref().expect("resolved config has an output directory")
    }

    /// SHA-256 of the resolved config with the output directory removed.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        seed::sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }
}

/// Collects written files for the manifest.
struct Outputs {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| io_error(root, e))?;
        Ok(Outputs {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    fn path(&self, rel: &str) -> Result<PathBuf, CliError> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        Ok(p)
    }

    fn record(&mut self, rel: &str) -> Result<(), CliError> {
        let p = self.root.join(rel);
        let bytes = std::fs::read(&p).map_err(|e| io_error(&p, e))?;
        self.files.insert(rel.to_string(), seed::sha256_hex(&bytes));
        Ok(())
    }

    fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(rel)?;
        std::fs::write(&p, bytes).map_err(|e| io_error(&p, e))?;
        self.record(rel)
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).expect("value serializes");
        s.push('\n');
        self.write_bytes(rel, s.as_bytes())
    }

    fn write_jsonl<T: Serialize>(&mut self, rel: &str, rows: &[T]) -> Result<(), CliError> {
        let mut buf = Vec::new();
        for r in rows {
            serde_json::to_writer(&mut buf, r).expect("row serializes");
            buf.push(b'\n');
        }
        self.write_bytes(rel, &buf)
    }

    fn finish(mut self, command: &str, cfg: &RunConfig) -> Result<PathBuf, CliError> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            fingerprint: String,
            config: &'a RunConfig,
            outputs: &'a BTreeMap<String, String>,
        }
        let files = std::mem::take(&mut self.files);
        let manifest = Manifest {
            command,
            fingerprint: cfg.fingerprint(),
            config: cfg,
            outputs: &files,
        };
        let p = self.root.join("manifest.json");
        let mut s = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        s.push('\n');
        std::fs::write(&p, s).map_err(|e| io_error(&p, e))?;
        Ok(p)
    }
}

/// A label read from any of the crate's label or prediction files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeakLabel {
    Soft(SoftLabel),
    Hard(Label),
    Abstain,
}

impl WeakLabel {
    pub fn label(&self) -> Option<Label> {
        match self {
            WeakLabel::Soft(s) => Some(s.hard()),
            WeakLabel::Hard(l) => Some(*l),
            WeakLabel::Abstain => None,
        }
    }

    pub fn soft(&self) -> Option<SoftLabel> {
        match self {
            WeakLabel::Soft(s) => Some(*s),
            WeakLabel::Hard(l) => Some(SoftLabel::degenerate(*l)),
            WeakLabel::Abstain => None,
        }
    }
}

/// Soft weak label as written by `ensemble run` and `student train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakLabelLine {
    pub pair_id: String,
    pub p0: f64,
    pub p1: f64,
    pub label: Label,
}

impl WeakLabelLine {
    pub fn new(pair_id: &str, soft: SoftLabel, label: Label) -> Self {
        WeakLabelLine {
            pair_id: pair_id.to_string(),
            p0: soft.p0,
            p1: soft.p1,
            label,
        }
    }
}

/// Reads `{pair_id, p0, p1, label}` or `{pair_id, label, abstain, ...}`
/// lines; a numeric `p1` wins over `label`, a null label is an abstain.
pub fn read_weak_labels(path: &Path) -> Result<Vec<(String, WeakLabel)>, CliError> {
    let rows: Vec<Value> = dataset::read_jsonl(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, v)| {
            let bad = |m: &str| CliError::data(format!("{}:{}: {m}", path.display(), i + 1));
            let id = v
                .get("pair_id")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("missing pair_id"))?;
            let p1 = v.get("p1").and_then(Value::as_f64);
            let p0 = v.get("p0").and_then(Value::as_f64);
            let label = match (p0, p1, v.get("label")) {
                (Some(p0), Some(p1), _) => WeakLabel::Soft(SoftLabel::new(p0, p1).map_err(|e| bad(&e.to_string()))?),
                (_, _, Some(Value::Number(n))) => {
                    let l = n.as_u64().and_then(|x| u8::try_from(x).ok()).and_then(Label::from_u8);
                    WeakLabel::Hard(l.ok_or_else(|| bad("label must be 0 or 1"))?)
                }
                (_, _, None | Some(Value::Null)) => WeakLabel::Abstain,
                _ => return Err(bad("label must be 0, 1 or null")),
            };
            Ok((id.to_string(), label))
        })
        .collect()
}

fn read_split(dir: &Path, name: &str) -> Result<Vec<BinaryPair>, CliError> {
    Ok(dataset::read_pairs(&dir.join(format!("{name}.jsonl")))?)
}

fn splits_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.dataset
        .splits
        .as_deref()
        .ok_or_else(|| CliError::config("dataset.splits (directory of prepared splits) is not set"))
}

fn gold_of(pairs: &[BinaryPair]) -> HashMap<String, Label> {
    pairs.iter().map(|p| (p.id.clone(), p.label)).collect()
}

fn topics_of(pairs: &[BinaryPair]) -> HashMap<String, String> {
    pairs
        .iter()
        .filter_map(|p| p.topic.as_ref().map(|t| (p.id.clone(), t.clone())))
        .collect()
}

/// Backends per role, optionally replayed from a fixture or recorded.
struct Backends<'a> {
    cfg: &'a RunConfig,
    fixture: Option<Arc<dyn Backend>>,
    recorders: Vec<Arc<RecordingBackend<Arc<dyn Backend>>>>,
    record: bool,
    cache: HashMap<String, Arc<dyn Backend>>,
}

impl<'a> Backends<'a> {
    fn new(cfg: &'a RunConfig, common: &CommonArgs) -> Result<Self, CliError> {
        let fixture = match &common.fixture {
            Some(path) => Some(Arc::new(ScriptedBackend::load_fixture(path)?) as Arc<dyn Backend>),
            None => None,
        };
        Ok(Backends {
            cfg,
            fixture,
            recorders: Vec::new(),
            record: common.record.is_some(),
            cache: HashMap::new(),
        })
    }

    fn get(&mut self, role: &str) -> Result<Arc<dyn Backend>, CliError> {
        if let Some(b) = self.cache.get(role) {
            return Ok(b.clone());
        }
        let fallback = match role {
            "aux_a" | "aux_b" => Some("aux"),
            "embed" => Some("student"),
            _ => None,
        };
        let base: Arc<dyn Backend> = match &self.fixture {
            Some(f) => f.clone(),
            None => {
                let desc: &BackendDescriptor = self
                    .cfg
                    .backends
                    .get(role)
                    .or_else(|| fallback.and_then(|f| self.cfg.backends.get(f)))
                    .ok_or_else(|| CliError::config(format!("no backend configured for role {role:?}")))?;
                build_backend(desc)?
            }
        };
        let b = if self.record {
            let rec = Arc::new(RecordingBackend::new(base));
            self.recorders.push(rec.clone());
            rec as Arc<dyn Backend>
        } else {
            base
        };
        self.cache.insert(role.to_string(), b.clone());
        Ok(b)
    }

    fn write_recording(&self, path: &Path) -> Result<(), CliError> {
        let mut merged: BTreeMap<String, FixtureEntry> = BTreeMap::new();
        for r in &self.recorders {
            for e in r.entries() {
                merged.entry(e.prompt_sha256.clone()).or_insert(e);
            }
        }
        let mut buf = Vec::new();
        for e in merged.values() {
            serde_json::to_writer(&mut buf, e).expect("fixture entry serializes");
            buf.push(b'\n');
        }
        std::fs::write(path, buf).map_err(|e| io_error(path, e))
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = cfg;
    // Subcommand flags are folded into the config so the manifest records them.
    match &cli.command {
        Command::Dataset {
            cmd: DatasetCmd::Prepare { raw },
        } => {
            if raw.is_some() {
                cfg.dataset.raw = raw.clone();
            }
        }
        Command::Ensemble {
            cmd: EnsembleCmd::Run { mode },
        } => {
            if let Some(m) = mode {
                cfg.ensemble.mode = *m;
            }
        }
        Command::Oversee { cmd } => {
            let (OverseeCmd::Interact(a) | OverseeCmd::Debate(a)) = cmd;
            if let Some(r) = a.runs {
                cfg.oversight.protocol.runs = r;
            }
            if let Some(r) = a.rounds {
                cfg.oversight.protocol.rounds = r;
            }
        }
        Command::Student {
            cmd: StudentCmd::Train { weak_labels, oracle },
        } => {
            if weak_labels.is_some() {
                cfg.student.weak_labels = weak_labels.clone();
            }
            cfg.student.oracle |= *oracle;
        }
        Command::Icl {
            cmd: IclCmd::Run { retriever, style, k },
        } => {
            if let Some(r) = retriever {
                cfg.icl.run.retriever = *r;
            }
            if let Some(s) = style {
                cfg.icl.run.style = *s;
            }
            if let Some(k) = k {
                cfg.icl.run.k = *k;
            }
        }
        Command::Eval {
            cmd: EvalCmd::Report { weak, strong, format },
        } => {
            if weak.is_some() {
                cfg.eval.weak = weak.clone();
            }
            if strong.is_some() {
                cfg.eval.strong = strong.clone();
            }
            if let Some(f) = format {
                cfg.eval.format = *f;
            }
        }
    }
    let cfg = cfg.resolve(&cli.common)?;
    let mut backends = Backends::new(&cfg, &cli.common)?;
    let manifest = match &cli.command {
        Command::Dataset { .. } => cmd_dataset_prepare(&cfg)?,
        Command::Ensemble { .. } => cmd_ensemble(&cfg)?,
        Command::Oversee { cmd } => {
            let mode = match cmd {
                OverseeCmd::Interact(_) => OverseeMode::Interact,
                OverseeCmd::Debate(_) => OverseeMode::Debate,
            };
            cmd_oversee(&cfg, mode, &mut backends)?
        }
        Command::Student { .. } => cmd_student_train(&cfg)?,
        Command::Icl { .. } => cmd_icl(&cfg, &mut backends)?,
        Command::Eval { .. } => cmd_eval_report(&cfg)?,
    };
    if let Some(path) = &cli.common.record {
        backends.write_recording(path)?;
    }
    println!("wrote {}", manifest.display());
    Ok(())
}

pub fn cmd_dataset_prepare(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let raw_path = cfg
        .dataset
        .raw
        .as_deref()
        .ok_or_else(|| CliError::config("no raw question file (--raw or dataset.raw)"))?;
    let raw = dataset::ingest_raw(raw_path)?;
    let pairs = dataset::to_binary_pairs(&raw, cfg.seed())?;
    let bundle = dataset::make_splits(&pairs, cfg.dataset.sizes, cfg.seed())?;
    let mut out = Outputs::new(cfg.out())?;
    for (name, split) in bundle.splits() {
        let rel = format!("{name}.jsonl");
        dataset::write_pairs(&out.path(&rel)?, split)?;
        out.record(&rel)?;
        println!("{name}: {} pairs", split.len());
    }
    out.finish("dataset prepare", cfg)
}

fn load_bank(paths: &[PathBuf]) -> Result<(FeatureBank, Vec<String>), CliError> {
    if paths.is_empty() {
        return Err(CliError::config("ensemble.features lists no feature files"));
    }
    let mut views = Vec::with_capacity(paths.len());
    let mut names = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let tag = if names.contains(&stem) {
            format!("{stem}#{i}")
        } else {
            stem
        };
        views.push(FeatureView::load(p, Some(&tag))?);
        names.push(tag);
    }
    Ok((FeatureBank::new(views), names))
}

fn vote_lines(ids: &[String], votes: &[Vote]) -> Vec<WeakLabelLine> {
    ids.iter()
        .zip(votes)
        .map(|(id, v)| WeakLabelLine::new(id, v.soft, v.label))
        .collect()
}

pub fn cmd_ensemble(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = splits_dir(cfg)?;
    let sec = &cfg.ensemble;
    let train1 = read_split(dir, "train1")?;
    let predict_on: Vec<(&str, Vec<BinaryPair>)> = ["train2", "valid", "test"]
        .into_iter()
        .map(|n| Ok((n, read_split(dir, n)?)))
        .collect::<Result<_, CliError>>()?;
    let (bank, layers) = load_bank(&sec.features)?;
    let items: Vec<(String, Label)> = train1.iter().map(|p| (p.id.clone(), p.label)).collect();
    let targets = hard_targets(train1.iter().map(|p| (p.id.as_str(), p.label)));
    let train_ids: Vec<String> = items.iter().map(|(id, _)| id.clone()).collect();
    let mut out = Outputs::new(cfg.out())?;
    let mut members = Vec::new();
    let mut predictions: Vec<(&str, Vec<WeakLabelLine>)> = Vec::new();

    match sec.mode {
        EnsembleMode::Bagging => {
            let sampler = match sec.sampler {
                Sampler::Bootstrap { n: 0 } => Sampler::Bootstrap { n: items.len() },
                Sampler::RandomSubset { n: 0, class_balanced } => Sampler::RandomSubset {
                    n: items.len(),
                    class_balanced,
                },
                s => s,
            };
            let bag = BaggingConfig {
                sampler,
                num_models: sec.num_models,
                voting: sec.voting,
                base_seed: cfg.seed(),
            };
            let model = train_bagging(&items, &bag, |sample| -> Result<BankProbe, LearnerError> {
                let source = &layers[sample.index % layers.len()];
                let view = bank.get(source).expect("layer loaded");
                let (dims, restricted) = match sec.feature_proportion {
                    Some(p) => {
                        let dims = sample_feature_dims(view.dim(), p, sample.seed)?;
                        let v = view.restrict_dims(&dims, source.as_str())?;
                        (Some(dims), Some(v))
                    }
                    None => (None, None),
                };
                let probe_cfg = ProbeConfig {
                    seed: sample.seed,
                    ..sec.probe.clone()
                };
                let probe = train_probe_on_ids(
                    restricted.as_ref().unwrap_or(view),
                    &sample.in_bag,
                    &targets,
                    None,
                    &probe_cfg,
                )?;
                Ok(BankProbe {
                    source: source.clone(),
                    dims,
                    probe,
                })
            })?;
            for (i, m) in model.members.iter().enumerate() {
                let rel = format!("members/member_{i}.json");
                out.write_json(&rel, &m.learner)?;
                members.push(ManifestMember {
                    index: i,
                    seed: m.seed,
                    params_file: rel,
                    alpha: None,
                });
            }
            for (name, pairs) in &predict_on {
                let ids: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
                let votes = model.predict(&bank.subset(&ids)?)?;
                predictions.push((name, vote_lines(&ids, &votes)));
            }
        }
        EnsembleMode::Adaboost | EnsembleMode::Gradboost => {
            let view = bank.get(&layers[0]).expect("layer loaded");
            let dims = match sec.feature_proportion {
                Some(p) => Some(sample_feature_dims(view.dim(), p, seed::derive(cfg.seed(), "dims"))?),
                None => None,
            };
            let view = match &dims {
                Some(d) => view.restrict_dims(d, view.source())?,
                None => view.clone(),
            };
            let train_view = view.subset(&train_ids)?;
            let labels: Vec<Label> = items.iter().map(|(_, l)| *l).collect();
            let split_views: Vec<(&str, Vec<String>, FeatureView)> = predict_on
                .iter()
                .map(|(n, pairs)| {
                    let ids: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
                    let v = view.subset(&ids)?;
                    Ok((*n, ids, v))
                })
                .collect::<Result<_, CliError>>()?;
            if sec.mode == EnsembleMode::Adaboost {
                let model = train_adaboost(&train_view, &labels, sec.rounds, |x: &FeatureView, _, w, round| {
                    let probe_cfg = ProbeConfig {
                        seed: cfg.seed().wrapping_add(round as u64),
                        ..sec.probe.clone()
                    };
                    train_probe_on_ids(x, x.ids(), &targets, Some(w), &probe_cfg)
                })?;
                for (i, r) in model.rounds.iter().enumerate() {
                    let rel = format!("members/round_{i}.json");
                    out.write_json(
                        &rel,
                        &BankProbe {
                            source: layers[0].clone(),
                            dims: dims.clone(),
                            probe: r.learner.clone(),
                        },
                    )?;
                    members.push(ManifestMember {
                        index: i,
                        seed: cfg.seed().wrapping_add(i as u64),
                        params_file: rel,
                        alpha: Some(r.alpha),
                    });
                }
                for (name, ids, v) in &split_views {
                    predictions.push((name, vote_lines(ids, &model.predict(v)?)));
                }
            } else {
                let ridge = sec.ridge;
                let model = train_gradient_boost(
                    &train_view,
                    &labels,
                    sec.rounds,
                    sec.shrinkage,
                    |x: &FeatureView, t, _| {
                        let rows: Vec<&[f64]> = x.rows().collect();
                        fit_least_squares(&rows, t, ridge)
                    },
                )?;
                let all = std::iter::once(&model.initial).chain(&model.rounds);
                for (i, r) in all.enumerate() {
                    let rel = format!("members/round_{i}.json");
                    out.write_json(&rel, r)?;
                    members.push(ManifestMember {
                        index: i,
                        seed: cfg.seed(),
                        params_file: rel,
                        alpha: None,
                    });
                }
                for (name, ids, v) in &split_views {
                    predictions.push((name, vote_lines(ids, &model.predict(v)?)));
                }
            }
        }
    }

    let gold: HashMap<String, Label> = predict_on.iter().flat_map(|(_, p)| gold_of(p)).collect();
    for (name, lines) in &predictions {
        out.write_jsonl(&format!("{name}.jsonl"), lines)?;
        let r = evalreport::accuracy(lines.iter().map(|l| (l.pair_id.as_str(), Some(l.label))), &gold)?;
        println!("{name}: weak-label accuracy {:.4} over {}", r.accuracy, r.n);
    }
    let method = serde_json::to_value(sec.mode).expect("mode serializes");
    let manifest = EnsembleManifest {
        method: method.as_str().unwrap_or_default().to_string(),
        config: serde_json::to_value(sec).expect("section serializes"),
        members,
    };
    out.write_json("ensemble_manifest.json", &manifest)?;
    out.finish("ensemble run", cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverseeMode {
    Interact,
    Debate,
}

fn load_templates(dir: Option<&Path>) -> Result<TemplateSet, CliError> {
    Ok(match dir {
        Some(d) => TemplateSet::load_dir(d)?,
        None => TemplateSet::default(),
    })
}

fn cmd_oversee(cfg: &RunConfig, mode: OverseeMode, backends: &mut Backends<'_>) -> Result<PathBuf, CliError> {
    let sec = &cfg.oversight;
    let so = &sec.protocol;
    so.validate()?;
    let dir = splits_dir(cfg)?;
    let templates = load_templates(sec.templates.as_deref())?;
    let demos = match &sec.demos {
        Some(p) => DebateDemos::load(p)?,
        None => DebateDemos::default(),
    };
    let weak = backends.get("weak")?;
    let (aux, aux_a, aux_b) = match mode {
        OverseeMode::Interact => (Some(backends.get("aux")?), None, None),
        OverseeMode::Debate => (None, Some(backends.get("aux_a")?), Some(backends.get("aux_b")?)),
    };
    let mut out = Outputs::new(cfg.out())?;
    for split in &sec.splits {
        let pairs = read_split(dir, split)?;
        let mut debate_logs = Vec::new();
        let mut contexts = Vec::new();
        let outcome = multi_run_vote::<CliError>(so.runs, so.seed, |run_id, run_seed| {
            let run_cfg = SoConfig {
                seed: run_seed,
                ..so.clone()
            };
            match mode {
                OverseeMode::Interact => {
                    let aux = aux.as_deref().expect("interaction has an aux backend");
                    let examples = generate_context_examples(&pairs, weak.as_ref(), &templates, &run_cfg)?;
                    let records =
                        interaction_annotate(&pairs, &examples, &run_cfg, aux, weak.as_ref(), &templates, run_id)?;
                    contexts.push((run_id, examples));
                    Ok(records)
                }
                OverseeMode::Debate => {
                    let a = aux_a.as_deref().expect("debate has agent A");
                    let b = aux_b.as_deref().expect("debate has agent B");
                    let outcome = run_debate(&pairs, &run_cfg, a, b, weak.as_ref(), &templates, &demos, run_id)?;
                    debate_logs.push((run_id, outcome.transcripts));
                    Ok(outcome.records)
                }
            }
        })?;
        for records in &outcome.runs {
            let run_id = records.first().map_or(0, |r| r.run_id);
            let lines: Vec<AnnotationLine> = records.iter().map(AnnotationLine::from).collect();
            let transcripts: Vec<oversight::TranscriptLine> = records.iter().map(Into::into).collect();
            out.write_jsonl(&format!("runs/run{run_id}/{split}.jsonl"), &lines)?;
            out.write_jsonl(&format!("runs/run{run_id}/{split}.transcripts.jsonl"), &transcripts)?;
        }
        for (run_id, examples) in &contexts {
            out.write_jsonl(&format!("runs/run{run_id}/{split}.context.jsonl"), examples)?;
        }
        for (run_id, logs) in &debate_logs {
            out.write_jsonl(&format!("runs/run{run_id}/{split}.debate.jsonl"), logs)?;
        }
        let mut voted = outcome.voted;
        if let (Some(per_class), "train2") = (so.per_class, split.as_str()) {
            voted = balance_by(&voted, |v| v.label, per_class, seed::derive(so.seed, "balance"))?;
        }
        let lines: Vec<AnnotationLine> = voted.iter().map(AnnotationLine::from_vote).collect();
        out.write_jsonl(&format!("{split}.jsonl"), &lines)?;
        let gold = gold_of(&pairs);
        let r = evalreport::accuracy(lines.iter().map(|l| (l.pair_id.as_str(), l.label)), &gold)?;
        println!(
            "{split}: {} pairs, accuracy {:.4} over {} labeled, abstain rate {:.4}",
            lines.len(),
            r.accuracy,
            r.n,
            r.abstain_rate
        );
    }
    out.finish(
        match mode {
            OverseeMode::Interact => "oversee interact",
            OverseeMode::Debate => "oversee debate",
        },
        cfg,
    )
}

fn soft_targets(labels: &[(String, WeakLabel)]) -> HashMap<String, SoftLabel> {
    labels
        .iter()
        .filter_map(|(id, l)| l.soft().map(|s| (id.clone(), s)))
        .collect()
}

fn weak_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    cfg.student
        .weak_labels
        .as_deref()
        .ok_or_else(|| CliError::config("student.weak_labels (directory of weak-label files) is not set"))
}

pub fn cmd_student_train(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let sec = &cfg.student;
    let dir = splits_dir(cfg)?;
    let features_path = sec
        .features
        .as_deref()
        .ok_or_else(|| CliError::config("student.features is not set"))?;
    let features = FeatureView::load(features_path, None)?;
    let train2 = read_split(dir, "train2")?;
    let valid = read_split(dir, "valid")?;
    let test = read_split(dir, "test")?;
    let weak = weak_dir(cfg)?;
    let weak_test = read_weak_labels(&weak.join("test.jsonl"))?;

    let (train_targets, valid_targets) = if sec.oracle {
        (
            hard_targets(train2.iter().map(|p| (p.id.as_str(), p.label))),
            hard_targets(valid.iter().map(|p| (p.id.as_str(), p.label))),
        )
    } else {
        (
            soft_targets(&read_weak_labels(&weak.join("train2.jsonl"))?),
            soft_targets(&read_weak_labels(&weak.join("valid.jsonl"))?),
        )
    };
    let in_order = |pairs: &[BinaryPair], t: &HashMap<String, SoftLabel>| -> Vec<String> {
        pairs
            .iter()
            .filter(|p| t.contains_key(&p.id))
            .map(|p| p.id.clone())
            .collect()
    };
    let train_view = features.subset(&in_order(&train2, &train_targets))?;
    let valid_view = features.subset(&in_order(&valid, &valid_targets))?;
    let fit = train_probe_report(
        &train_view,
        &train_targets,
        &sec.probe,
        Some((&valid_view, &valid_targets)),
    )?;

    let test_ids: Vec<String> = test.iter().map(|p| p.id.clone()).collect();
    let preds = predict_probe(&fit.probe, &features.subset(&test_ids)?)?;
    let lines: Vec<WeakLabelLine> = test_ids
        .iter()
        .zip(&preds)
        .map(|(id, s)| WeakLabelLine::new(id, *s, s.hard()))
        .collect();
    let gold = gold_of(&test);
    let topics = topics_of(&test);
    let strong_preds: Vec<(&str, Option<Label>)> = lines.iter().map(|l| (l.pair_id.as_str(), Some(l.label))).collect();
    let weak_preds: Vec<(&str, Option<Label>)> = weak_test.iter().map(|(id, l)| (id.as_str(), l.label())).collect();
    let report = W2SReport::new(
        evalreport::evaluate(&weak_preds, &gold, &topics)?,
        evalreport::evaluate(&strong_preds, &gold, &topics)?,
        cfg.fingerprint(),
    );

    let mut out = Outputs::new(cfg.out())?;
    out.write_json("probe.json", &fit.probe)?;
    out.write_json(
        "training.json",
        &serde_json::json!({
            "epoch_losses": fit.epoch_losses,
            "valid_agreement": fit.valid_agreement,
            "best_epoch": fit.best_epoch,
            "train_size": train_view.len(),
            "oracle": sec.oracle,
        }),
    )?;
    out.write_jsonl("predictions.jsonl", &lines)?;
    write_report(&mut out, &report)?;
    println!(
        "weak {:.4} -> student {:.4} (delta {:+.4})",
        report.weak.accuracy, report.strong_student.accuracy, report.delta
    );
    out.finish("student train", cfg)
}

fn write_report(out: &mut Outputs, report: &W2SReport) -> Result<(), CliError> {
    for (rel, format) in [("report.json", ReportFormat::Json), ("report.csv", ReportFormat::Csv)] {
        emit_report(report, &out.path(rel)?, format)?;
        out.record(rel)?;
    }
    Ok(())
}

fn cmd_icl(cfg: &RunConfig, backends: &mut Backends<'_>) -> Result<PathBuf, CliError> {
    let sec = &cfg.icl;
    let dir = splits_dir(cfg)?;
    let pool_path = match (&sec.pool, &cfg.student.weak_labels) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => d.join("train2.jsonl"),
        (None, None) => return Err(CliError::config("icl.pool (weak labels for the shot pool) is not set")),
    };
    let train2 = read_split(dir, "train2")?;
    let test = read_split(dir, "test")?;
    let by_id: HashMap<&str, &BinaryPair> = train2.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut pool = Vec::new();
    for (id, label) in read_weak_labels(&pool_path)? {
        let pair = *by_id
            .get(id.as_str())
            .ok_or_else(|| CliError::data(format!("{}: pair {id} is not in train2", pool_path.display())))?;
        match label {
            WeakLabel::Soft(s) => pool.push(Shot::from_soft(pair.clone(), s)),
            WeakLabel::Hard(l) => pool.push(Shot {
                pair: pair.clone(),
                pseudo_label: l,
                confidence: None,
            }),
            WeakLabel::Abstain => {}
        }
    }
    let templates = load_templates(sec.templates.as_deref())?;
    let model = backends.get("student")?;
    let embedder = match sec.run.retriever {
        RetrieverKind::Topk | RetrieverKind::Votek => backends.get("embed")?,
        _ => model.clone(),
    };
    let run: &IclConfig = &sec.run;
    let (preds, prompts) = icl::run_icl(&test, &pool, run, model.as_ref(), embedder.as_ref(), &templates)?;

    let gold = gold_of(&test);
    let topics = topics_of(&test);
    let strong: Vec<(&str, Option<Label>)> = preds.iter().map(|p| (p.pair_id.as_str(), p.label)).collect();
    let strong = evalreport::evaluate(&strong, &gold, &topics)?;
    let mut out = Outputs::new(cfg.out())?;
    out.write_jsonl("predictions.jsonl", &preds)?;
    out.write_jsonl("prompts.jsonl", &prompts)?;
    let weak_test = pool_path.with_file_name("test.jsonl");
    if weak_test.exists() {
        let weak = read_weak_labels(&weak_test)?;
        let weak: Vec<(&str, Option<Label>)> = weak.iter().map(|(id, l)| (id.as_str(), l.label())).collect();
        let report = W2SReport::new(evalreport::evaluate(&weak, &gold, &topics)?, strong, cfg.fingerprint());
        write_report(&mut out, &report)?;
        println!(
            "weak {:.4} -> icl {:.4} (delta {:+.4}), abstain rate {:.4}",
            report.weak.accuracy, report.strong_student.accuracy, report.delta, report.strong_student.abstain_rate
        );
    } else {
        out.write_json("eval.json", &strong)?;
        println!(
            "icl accuracy {:.4}, abstain rate {:.4}",
            strong.accuracy, strong.abstain_rate
        );
    }
    out.finish("icl run", cfg)
}

fn cmd_eval_report(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = splits_dir(cfg)?;
    let test = read_split(dir, "test")?;
    let gold = gold_of(&test);
    let topics = topics_of(&test);
    let load = |p: Option<&Path>, what: &str| -> Result<EvalResult, CliError> {
        let p = p.ok_or_else(|| CliError::config(format!("no {what} prediction file (--{what} or eval.{what})")))?;
        let labels = read_weak_labels(p)?;
        let preds: Vec<(&str, Option<Label>)> = labels.iter().map(|(id, l)| (id.as_str(), l.label())).collect();
        Ok(evalreport::evaluate(&preds, &gold, &topics)?)
    };
    let report = W2SReport::new(
        load(cfg.eval.weak.as_deref(), "weak")?,
        load(cfg.eval.strong.as_deref(), "strong")?,
        cfg.fingerprint(),
    );
    let mut out = Outputs::new(cfg.out())?;
    let rel = match cfg.eval.format {
        ReportFormat::Json => "report.json",
        ReportFormat::Csv => "report.csv",
    };
    emit_report(&report, &out.path(rel)?, cfg.eval.format)?;
    out.record(rel)?;
    println!(
        "weak {:.4} -> strong {:.4} (delta {:+.4})",
        report.weak.accuracy, report.strong_student.accuracy, report.delta
    );
    out.finish("eval report", cfg)
}

/// Writes a prepared split bundle in the layout `dataset prepare` produces.
pub fn write_splits(dir: &Path, bundle: &SplitBundle) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    for (name, split) in bundle.splits() {
        dataset::write_pairs(&dir.join(format!("{name}.jsonl")), split)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_sections_parse_with_defaults() {
        let cfg = RunConfig::parse(
            r#"
            seed = 3
            [ensemble]
            mode = "adaboost"
            sampler = { kind = "bootstrap", n = 10 }
            [oversight]
            n = 2
            rounds = 3
            [icl]
            k = 4
            retriever = "bm25"
            [icl.params]
            rho = 5.0
            [backends.weak]
            kind = "scripted"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.ensemble.mode, EnsembleMode::Adaboost);
        assert_eq!(cfg.oversight.protocol.n, 2);
        assert_eq!(cfg.oversight.splits.len(), 3);
        assert_eq!(cfg.icl.run.k, 4);
        assert_eq!(cfg.icl.run.params.rho, 5.0);
        assert_eq!(cfg.icl.run.params.k1, 1.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("sed = 1").is_err());
        assert!(RunConfig::parse("[ensemble]\nmodes = 'x'").is_err());
        assert!(RunConfig::parse("[oversight]\nrunz = 2").is_err());
        assert!(RunConfig::parse("[icl]\nkk = 2").is_err());
    }

    #[test]
    fn flags_win_and_seed_is_required() {
        let common = CommonArgs {
            seed: Some(9),
            out: Some("o".into()),
            max_in_flight: Some(2),
            ..Default::default()
        };
        let cfg = RunConfig {
            seed: Some(1),
            ..Default::default()
        }
        .resolve(&common)
        .unwrap();
        assert_eq!(cfg.seed(), 9);
        assert_eq!(cfg.oversight.protocol.max_in_flight, 2);
        let err = RunConfig::default()
            .resolve(&CommonArgs {
                out: Some("o".into()),
                ..Default::default()
            })
            .unwrap_err();
        assert_eq!(err.code, EXIT_CONFIG);
    }

    #[test]
    fn weak_label_formats() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.jsonl");
        std::fs::write(
            &p,
            "{\"pair_id\":\"a\",\"p0\":0.25,\"p1\":0.75,\"label\":1}\n{\"pair_id\":\"b\",\"label\":0,\"abstain\":false}\n{\"pair_id\":\"c\",\"label\":null,\"abstain\":true}\n{\"pair_id\":\"d\",\"p0\":null,\"p1\":null,\"label\":null}\n",
        )
        .unwrap();
        let got = read_weak_labels(&p).unwrap();
        assert_eq!(got[0].1, WeakLabel::Soft(SoftLabel { p0: 0.25, p1: 0.75 }));
        assert_eq!(got[1].1, WeakLabel::Hard(Label::Incorrect));
        assert_eq!(got[2].1, WeakLabel::Abstain);
        assert_eq!(got[3].1, WeakLabel::Abstain);
    }
}
