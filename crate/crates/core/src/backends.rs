//! Model access: an OpenAI-compatible HTTP client and a scripted backend that
//! replays responses from digest-keyed fixtures.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{self, DatasetError};
use crate::seed::sha256_hex;
use crate::text::tokenize;

pub const DEFAULT_AUTH_ENV: &str = "W2S_API_KEY";
pub const DEFAULT_BASE_ENV: &str = "W2S_API_BASE";
pub const HASHED_EMBEDDING_DIM: usize = 256;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend {backend:?} lacks the {capability:?} capability")]
    CapabilityMissing { backend: String, capability: Capability },
    #[error("no scripted response for prompt digest {digest}")]
    FixtureMiss { digest: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("giving up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    InvalidResponse(String),
    #[error("backend config: {0}")]
    Config(String),
    #[error("duplicate fixture digest {digest} at line {line}")]
    DuplicateDigest { digest: String, line: usize },
    #[error(transparent)]
    Fixture(#[from] DatasetError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Generate,
    Embed,
    TokenScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.7,
            top_p: 0.8,
            max_tokens: 256,
            stop: None,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::Config("temperature must be >= 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::Config("top_p must lie in (0, 1]".into()));
        }
        if self.max_tokens < 1 {
            return Err(BackendError::Config("max_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub auth_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// Initial backoff delay; doubles on every retry.
    pub retry_base_ms: u64,
    pub capabilities: Vec<Capability>,
    pub max_in_flight: usize,
    /// Send the prompt's first line as a system message.
    pub system_header: bool,
    pub fixture: Option<PathBuf>,
    pub strict: bool,
    pub default_response: Option<String>,
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        BackendDescriptor {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: String::new(),
            auth_env: DEFAULT_AUTH_ENV.to_string(),
            timeout_secs: 60.0,
            max_retries: 3,
            retry_base_ms: 1000,
            capabilities: vec![Capability::Generate],
            max_in_flight: 8,
            system_header: false,
            fixture: None,
            strict: true,
            default_response: None,
        }
    }
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.kind == BackendKind::Http {
            if self.model_name.is_empty() {
                return Err(BackendError::Config("http backend requires model_name".into()));
            }
            if self.resolved_endpoint().is_none() {
                return Err(BackendError::Config(format!(
                    "http backend requires an endpoint or {DEFAULT_BASE_ENV}"
                )));
            }
        }
        if self.max_in_flight < 1 {
            return Err(BackendError::Config("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }

    pub fn resolved_endpoint(&self) -> Option<String> {
        self.endpoint
            .clone()
            .or_else(|| std::env::var(DEFAULT_BASE_ENV).ok())
            .filter(|e| !e.is_empty())
            .map(|e| e.trim_end_matches('/').to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    /// Probabilities of candidate tokens at the first generated position.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_scores: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

impl BackendResponse {
    pub fn text(text: impl Into<String>) -> Self {
        BackendResponse {
            text: text.into(),
            token_scores: None,
            usage: None,
        }
    }
}

/// A model endpoint. Implementations are shared across worker threads.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> &[Capability];
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<BackendResponse, BackendError>;
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;

    fn supports(&self, capability: Capability) -> bool {
        self.capabilities().contains(&capability)
    }

    fn require(&self, capability: Capability) -> Result<(), BackendError> {
        if self.supports(capability) {
            Ok(())
        } else {
            Err(BackendError::CapabilityMissing {
                backend: self.name().to_string(),
                capability,
            })
        }
    }
}

/// Deterministic bag-of-words vector: each token adds 1 to a bucket chosen
/// by its SHA-256.
pub fn hashed_bow(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for token in tokenize(text) {
        let digest = Sha256::digest(token.as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        v[(u64::from_le_bytes(bytes) % dim as u64) as usize] += 1.0;
    }
    v
}

pub fn prompt_digest(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

/// One line of a fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub prompt_sha256: String,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_scores: Option<BTreeMap<String, f64>>,
}

/// Replays responses keyed by the SHA-256 of the exact prompt.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    name: String,
    entries: HashMap<String, FixtureEntry>,
    strict: bool,
    default_response: Option<String>,
    capabilities: Vec<Capability>,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>) -> Self {
        ScriptedBackend {
            name: name.into(),
            entries: HashMap::new(),
            strict: true,
            default_response: None,
            capabilities: vec![Capability::Generate, Capability::Embed, Capability::TokenScores],
        }
    }

    /// Strict mode errors on unknown prompts; lenient mode answers them with
    /// `default_response` (and still errors when none is set).
    pub fn lenient(mut self, default_response: impl Into<String>) -> Self {
        self.strict = false;
        self.default_response = Some(default_response.into());
        self
    }

    pub fn with_response(mut self, prompt: &str, response: impl Into<String>) -> Self {
        self.insert(prompt, response, None);
        self
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>, token_scores: Option<BTreeMap<String, f64>>) {
        let digest = prompt_digest(prompt);
        self.entries.insert(
            digest.clone(),
            FixtureEntry {
                prompt_sha256: digest,
                response: response.into(),
                token_scores,
            },
        );
    }

    pub fn load_fixture(path: &Path) -> Result<Self, BackendError> {
        let lines: Vec<FixtureEntry> = dataset::read_jsonl(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scripted".into());
        let mut backend = ScriptedBackend::new(name);
        for (i, entry) in lines.into_iter().enumerate() {
            if backend.entries.contains_key(&entry.prompt_sha256) {
                return Err(BackendError::DuplicateDigest {
                    digest: entry.prompt_sha256,
                    line: i + 1,
                });
            }
            backend.entries.insert(entry.prompt_sha256.clone(), entry);
        }
        Ok(backend)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolves(&self, prompt: &str) -> bool {
        self.entries.contains_key(&prompt_digest(prompt))
    }
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> &[Capability] {
        &self.capabilities
    }

    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<BackendResponse, BackendError> {
        let digest = prompt_digest(prompt);
        match self.entries.get(&digest) {
            Some(e) => Ok(BackendResponse {
                text: e.response.clone(),
                token_scores: e.token_scores.clone(),
                usage: None,
            }),
            None => match (&self.default_response, self.strict) {
                (Some(default), false) => Ok(BackendResponse::text(default.clone())),
                _ => Err(BackendError::FixtureMiss { digest }),
            },
        }
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        Ok(hashed_bow(text, HASHED_EMBEDDING_DIM))
    }
}

/// Wraps a backend and remembers every exchange so it can be written out as
/// a fixture and replayed by [`ScriptedBackend`].
pub struct RecordingBackend<B> {
    inner: B,
    recorded: Mutex<BTreeMap<String, FixtureEntry>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            recorded: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn entries(&self) -> Vec<FixtureEntry> {
        self.recorded.lock().unwrap().values().cloned().collect()
    }

    /// Writes entries sorted by digest.
    pub fn write_fixture(&self, path: &Path) -> Result<(), BackendError> {
        let io_err = |source| BackendError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        for entry in self.entries() {
            serde_json::to_writer(&mut w, &entry).expect("fixture entry serializes");
            w.write_all(b"\n").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn capabilities(&self) -> &[Capability] {
        self.inner.capabilities()
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<BackendResponse, BackendError> {
        let response = self.inner.generate(prompt, params)?;
        let digest = prompt_digest(prompt);
        self.recorded
            .lock()
            .unwrap()
            .entry(digest.clone())
            .or_insert_with(|| FixtureEntry {
                prompt_sha256: digest,
                response: response.text.clone(),
                token_scores: response.token_scores.clone(),
            });
        Ok(response)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        self.inner.embed(text)
    }
}

impl<T: Backend + ?Sized> Backend for Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn capabilities(&self) -> &[Capability] {
        (**self).capabilities()
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<BackendResponse, BackendError> {
        (**self).generate(prompt, params)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        (**self).embed(text)
    }
}

/// Exponential backoff settings for one call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub factor: f64,
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based), with up to 25% jitter.
    pub fn delay(&self, retry: u32) -> Duration {
        let nominal = self.base.as_secs_f64() * self.factor.powi(retry as i32);
        let jitter = 1.0 + rand::thread_rng().gen_range(0.0..0.25);
        Duration::from_secs_f64(nominal * jitter)
    }
}

/// A failed attempt and whether it may be retried.
#[derive(Debug)]
pub struct AttemptError {
    pub error: BackendError,
    pub retryable: bool,
    /// Server-advised wait (HTTP 429 `Retry-After`).
    pub retry_after: Option<Duration>,
}

impl AttemptError {
    pub fn transient(error: BackendError) -> Self {
        AttemptError {
            error,
            retryable: true,
            retry_after: None,
        }
    }

    pub fn fatal(error: BackendError) -> Self {
        AttemptError {
            error,
            retryable: false,
            retry_after: None,
        }
    }
}

/// Runs `op` until it succeeds, fails fatally, or `max_retries` retries
/// have been spent.
pub fn with_retries<T>(
    policy: &RetryPolicy,
    mut op: impl FnMut(u32) -> Result<T, AttemptError>,
) -> Result<T, BackendError> {
    let mut attempt = 0;
    loop {
        match op(attempt) {
            Ok(v) => return Ok(v),
            Err(e) if !e.retryable => return Err(e.error),
            Err(e) if attempt >= policy.max_retries => {
                return Err(BackendError::RetriesExhausted {
                    attempts: attempt + 1,
                    last: e.error.to_string(),
                })
            }
            Err(e) => {
                let wait = e.retry_after.unwrap_or_else(|| policy.delay(attempt));
                log::warn!("attempt {} failed ({}); retrying in {:?}", attempt + 1, e.error, wait);
                std::thread::sleep(wait);
                attempt += 1;
            }
        }
    }
}

/// Counting semaphore bounding concurrent requests per backend.
#[derive(Debug)]
pub struct InFlightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct InFlightPermit<'a> {
    limit: &'a InFlightLimit,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        InFlightLimit {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> InFlightPermit<'_> {
        let mut n = self.current.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        InFlightPermit { limit: self }
    }
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        *self.limit.current.lock().unwrap() -= 1;
        self.limit.freed.notify_one();
    }
}

/// Holds the API key; never printed.
#[derive(Clone)]
struct Secret(Option<String>);

impl std::fmt::Debug for Secret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Secret([redacted])")
    }
}

/// Client for OpenAI-compatible `/chat/completions` and `/embeddings`.
#[derive(Debug)]
pub struct HttpBackend {
    name: String,
    endpoint: String,
    model: String,
    secret: Secret,
    client: reqwest::blocking::Client,
    policy: RetryPolicy,
    capabilities: Vec<Capability>,
    system_header: bool,
    limit: InFlightLimit,
}

impl HttpBackend {
    pub fn new(desc: &BackendDescriptor) -> Result<Self, BackendError> {
        desc.validate()?;
        let endpoint = desc.resolved_endpoint().expect("validated");
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(desc.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend {
            name: desc.model_name.clone(),
            endpoint,
            model: desc.model_name.clone(),
            secret: Secret(std::env::var(&desc.auth_env).ok().filter(|k| !k.is_empty())),
            client,
            policy: RetryPolicy {
                max_retries: desc.max_retries,
                base: Duration::from_millis(desc.retry_base_ms),
                factor: 2.0,
            },
            capabilities: desc.capabilities.clone(),
            system_header: desc.system_header,
            limit: InFlightLimit::new(desc.max_in_flight),
        })
    }

    fn redact(&self, text: String) -> String {
        match &self.secret.0 {
            Some(key) => text.replace(key.as_str(), "[redacted]"),
            None => text,
        }
    }

    /// Request body for a chat completion.
    pub fn chat_body(&self, prompt: &str, params: &GenerationParams) -> Value {
        let messages = match prompt.split_once('\n').filter(|_| self.system_header) {
            Some((header, rest)) => json!([
                {"role": "system", "content": header},
                {"role": "user", "content": rest},
            ]),
            None => json!([{"role": "user", "content": prompt}]),
        };
        let mut body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        });
        if let Some(stop) = &params.stop {
            body["stop"] = json!(stop);
        }
        if self.supports(Capability::TokenScores) {
            body["logprobs"] = json!(true);
            body["top_logprobs"] = json!(5);
        }
        body
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let _permit = self.limit.acquire();
        let url = format!("{}/{}", self.endpoint, path);
        with_retries(&self.policy, |_| {
            let mut req = self.client.post(&url).json(body);
            if let Some(key) = &self.secret.0 {
                req = req.bearer_auth(key);
            }
            let resp = req.send().map_err(|e| {
                AttemptError::transient(BackendError::Transport(self.redact(e.without_url().to_string())))
            })?;
            let status = resp.status();
            let retry_after = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<f64>().ok())
                .map(Duration::from_secs_f64);
            let text = resp
                .text()
                .map_err(|e| AttemptError::transient(BackendError::Transport(self.redact(e.to_string()))))?;
            if !status.is_success() {
                let excerpt: String = text.chars().take(200).collect();
                let error = BackendError::Http {
                    status: status.as_u16(),
                    message: self.redact(excerpt),
                };
                let retryable = status.as_u16() == 429 || status.is_server_error();
                return Err(AttemptError {
                    error,
                    retryable,
                    retry_after: if status.as_u16() == 429 { retry_after } else { None },
                });
            }
            serde_json::from_str(&text).map_err(|e| AttemptError::fatal(BackendError::InvalidResponse(e.to_string())))
        })
    }
}

/// Reads `choices[0]` of a chat-completion response.
pub fn parse_chat_response(v: &Value) -> Result<BackendResponse, BackendError> {
    let choice = v
        .pointer("/choices/0")
        .ok_or_else(|| BackendError::InvalidResponse("no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::InvalidResponse("choices[0].message.content missing".into()))?
        .to_string();
    let token_scores = choice
        .pointer("/logprobs/content/0/top_logprobs")
        .and_then(Value::as_array)
        .map(|alts| {
            let mut scores = BTreeMap::new();
            for alt in alts {
                if let (Some(tok), Some(lp)) = (
                    alt.get("token").and_then(Value::as_str),
                    alt.get("logprob").and_then(Value::as_f64),
                ) {
                    *scores.entry(tok.trim().to_string()).or_insert(0.0) += lp.exp();
                }
            }
            scores
        })
        .filter(|s| !s.is_empty());
    let usage = v.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Ok(BackendResponse {
        text,
        token_scores,
        usage,
    })
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> &[Capability] {
        &self.capabilities
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<BackendResponse, BackendError> {
        self.require(Capability::Generate)?;
        params.validate()?;
        let v = self.post("chat/completions", &self.chat_body(prompt, params))?;
        parse_chat_response(&v)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        self.require(Capability::Embed)?;
        let v = self.post("embeddings", &json!({"model": self.model, "input": text}))?;
        v.pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<f64>>>())
            .ok_or_else(|| BackendError::InvalidResponse("data[0].embedding missing".into()))
    }
}

/// Builds the backend a descriptor describes.
pub fn build_backend(desc: &BackendDescriptor) -> Result<Arc<dyn Backend>, BackendError> {
    desc.validate()?;
    match desc.kind {
        BackendKind::Http => Ok(Arc::new(HttpBackend::new(desc)?)),
        BackendKind::Scripted => {
            let mut backend = match &desc.fixture {
                Some(path) => ScriptedBackend::load_fixture(path)?,
                None => ScriptedBackend::new(desc.model_name.clone()),
            };
            if !desc.strict {
                backend.strict = false;
                backend.default_response = desc.default_response.clone();
            }
            Ok(Arc::new(backend))
        }
    }
}
