#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};
use w2sg::backends::{Backend, BackendError, BackendResponse, Capability, GenerationParams};
use w2sg::dataset::{BinaryPair, Label};
use w2sg::seed::sha256_hex;

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Set `W2SG_BLESS=1` to regenerate fixtures and golden files.
pub fn blessing() -> bool {
    std::env::var_os("W2SG_BLESS").is_some()
}

pub fn pair(qid: &str, question: &str, answer: &str, label: Label) -> BinaryPair {
    BinaryPair {
        id: format!("{qid}-{}", label.as_u8()),
        qid: qid.to_string(),
        question: question.to_string(),
        answer: answer.to_string(),
        label,
        topic: Some(if qid < "q3" { "physics" } else { "biology" }.to_string()),
    }
}

/// Four questions, one correct and one incorrect answer each.
pub fn protocol_pairs() -> Vec<BinaryPair> {
    let q = [
        (
            "q1",
            "What is the boiling point of water at sea level?",
            "100 degrees Celsius",
            "50 degrees Celsius",
        ),
        ("q2", "Which force keeps planets in orbit?", "Gravity", "Magnetism"),
        ("q3", "What organelle makes ATP?", "The mitochondrion", "The ribosome"),
        ("q4", "What carries oxygen in blood?", "Hemoglobin", "Insulin"),
    ];
    q.iter()
        .flat_map(|(id, question, right, wrong)| {
            [
                pair(id, question, right, Label::Correct),
                pair(id, question, wrong, Label::Incorrect),
            ]
        })
        .collect()
}

const RIGHT_ANSWERS: [&str; 4] = ["100 degrees Celsius", "Gravity", "The mitochondrion", "Hemoglobin"];

/// Generated question sets mark their correct answers with this word.
pub const RIGHT_MARKER: &str = "alpha";

fn is_right(tail: &str) -> bool {
    tail.contains(RIGHT_MARKER) || RIGHT_ANSWERS.iter().any(|a| tail.contains(a))
}

/// Deterministic stand-in for a model. Judgement prompts get "Yes"/"No"
/// (wrong on the q4 pairs so the annotation is imperfect); every other
/// prompt gets a short note derived from the prompt digest.
pub struct RuleBackend {
    name: String,
    pub calls: AtomicUsize,
}

impl RuleBackend {
    pub fn new(name: &str) -> Self {
        RuleBackend {
            name: name.to_string(),
            calls: AtomicUsize::new(0),
        }
    }
}

pub fn rule_response(name: &str, prompt: &str) -> String {
    if prompt.contains("Respond with 1 if") {
        let tail = prompt.rsplit("A:").next().unwrap_or("");
        return if is_right(tail) { "1" } else { "0" }.to_string();
    }
    let judging = prompt.contains("output \"Yes\"") || prompt.contains("reply with solely");
    if judging {
        let tail = prompt.rsplit("answer:").next().unwrap_or("");
        let right = is_right(tail);
        let flipped = tail.contains("Hemoglobin") || tail.contains("Insulin");
        return if right != flipped { "Yes" } else { "No" }.to_string();
    }
    format!("{name} note {}", &sha256_hex(prompt.as_bytes())[..8])
}

impl Backend for RuleBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> &[Capability] {
        &[Capability::Generate]
    }

    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<BackendResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(BackendResponse::text(rule_response(&self.name, prompt)))
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        Ok(w2sg::backends::hashed_bow(text, 32))
    }
}

/// Compares `actual` to the golden file, or rewrites it when blessing.
pub fn check_golden(name: &str, actual: &[u8]) -> Result<(), String> {
    let path = golden_dir().join(name);
    if blessing() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{name} differs from golden"))
    }
}

/// What the loopback stub does with each request.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum StubMode {
    /// Answers chat completions with [`rule_response`] on the last user message.
    Rules,
    /// Answers 500 with the request's Authorization header in the body.
    EchoAuthError,
    /// Answers 429 `fail_first` times, then behaves like `Rules`.
    Throttle { fail_first: usize },
}

pub struct StubServer {
    pub base: String,
    pub requests: Arc<AtomicUsize>,
}

/// Minimal OpenAI-compatible endpoint on 127.0.0.1 for tests.
pub fn spawn_stub(mode: StubMode) -> StubServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = requests.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let counter = counter.clone();
            std::thread::spawn(move || serve(stream, mode, &counter));
        }
    });
    StubServer { base, requests }
}

fn serve(stream: TcpStream, mode: StubMode, counter: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut out = stream;
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
            return;
        }
        let mut length = 0usize;
        let mut auth = String::new();
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => length = v.trim().parse().unwrap_or(0),
                    "authorization" => auth = v.trim().to_string(),
                    _ => {}
                }
            }
        }
        let mut body = vec![0u8; length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let n = counter.fetch_add(1, Ordering::SeqCst);
        let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
        let (status, payload) = match mode {
            StubMode::EchoAuthError => (500, json!({"error": format!("upstream rejected {auth}")})),
            StubMode::Throttle { fail_first } if n < fail_first => (429, json!({"error": "slow down"})),
            _ => (200, completion(&request)),
        };
        let text = payload.to_string();
        let reason = match status {
            200 => "OK",
            429 => "Too Many Requests",
            _ => "Internal Server Error",
        };
        let head = format!(
            "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nretry-after: 0\r\n\r\n",
            text.len()
        );
        if out
            .write_all(head.as_bytes())
            .and_then(|_| out.write_all(text.as_bytes()))
            .is_err()
        {
            return;
        }
    }
}

fn completion(request: &Value) -> Value {
    let prompt = request
        .pointer("/messages")
        .and_then(Value::as_array)
        .and_then(|m| m.last())
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .unwrap_or("");
    json!({
        "choices": [{"message": {"role": "assistant", "content": rule_response("stub", prompt)}}],
        "usage": {"prompt_tokens": prompt.len(), "completion_tokens": 1},
    })
}

/// Exact upper tail P(X >= k) for X ~ Binomial(n, 1/2).
pub fn sign_test_p(successes: usize, n: usize) -> f64 {
    let mut total = 0.0;
    let mut c = 1.0f64;
    for i in 0..=n {
        if i > 0 {
            c = c * (n - i + 1) as f64 / i as f64;
        }
        if i >= successes {
            total += c;
        }
    }
    total / 2f64.powi(n as i32)
}
