//! A tiny science quiz and a rule-based stand-in for a chat model, so the
//! oversight and in-context examples run offline.

#![allow(dead_code)]

use w2sg::backends::{hashed_bow, Backend, BackendError, BackendResponse, Capability, GenerationParams};
use w2sg::dataset::{BinaryPair, Label};
use w2sg::seed::sha256_hex;

pub const QUIZ: [(&str, &str, &str, &str); 12] = [
    (
        "What is the boiling point of water at sea level?",
        "100 degrees Celsius",
        "50 degrees Celsius",
        "physics",
    ),
    ("Which force keeps planets in orbit?", "Gravity", "Magnetism", "physics"),
    (
        "What is the unit of electrical resistance?",
        "The ohm",
        "The tesla",
        "physics",
    ),
    (
        "What kind of wave is sound in air?",
        "A longitudinal wave",
        "A transverse wave",
        "physics",
    ),
    (
        "What organelle makes most ATP?",
        "The mitochondrion",
        "The ribosome",
        "biology",
    ),
    ("What carries oxygen in blood?", "Hemoglobin", "Insulin", "biology"),
    (
        "Which molecule stores genetic information?",
        "DNA",
        "Glucose",
        "biology",
    ),
    (
        "What do plants take in for photosynthesis?",
        "Carbon dioxide",
        "Nitrogen gas",
        "biology",
    ),
    ("What is the chemical symbol for sodium?", "Na", "So", "chemistry"),
    ("What is the pH of pure water?", "7", "3", "chemistry"),
    ("Which gas makes up most of the air?", "Nitrogen", "Helium", "chemistry"),
    (
        "What bond shares electron pairs?",
        "A covalent bond",
        "An ionic bond",
        "chemistry",
    ),
];

pub fn quiz_pairs() -> Vec<BinaryPair> {
    let mut pairs = Vec::new();
    for (i, (question, right, wrong, topic)) in QUIZ.iter().enumerate() {
        for (answer, label) in [(right, Label::Correct), (wrong, Label::Incorrect)] {
            pairs.push(BinaryPair {
                id: format!("q{i}-{}", label.as_u8()),
                qid: format!("q{i}"),
                question: question.to_string(),
                answer: answer.to_string(),
                label,
                topic: Some(topic.to_string()),
            });
        }
    }
    pairs
}

/// Judges answers from the quiz key but gets a share of them wrong unless
/// the prompt's context already names the right answer.
pub struct QuizModel {
    name: String,
    error_rate: f64,
    capabilities: Vec<Capability>,
}

impl QuizModel {
    pub fn new(name: &str, error_rate: f64) -> Self {
        QuizModel {
            name: name.to_string(),
            error_rate,
            capabilities: vec![Capability::Generate, Capability::Embed],
        }
    }

    fn slips(&self, key: &str) -> bool {
        let h = sha256_hex(format!("{}/{key}", self.name).as_bytes());
        let x = u32::from_str_radix(&h[..8], 16).unwrap() as f64 / u32::MAX as f64;
        x < self.error_rate
    }

    fn respond(&self, prompt: &str) -> String {
        let asked = QUIZ
            .iter()
            .filter_map(|q| prompt.rfind(q.0).map(|at| (at, q)))
            .max_by_key(|(at, _)| *at);
        let Some((asked_at, &(_, right, wrong, topic))) = asked else {
            return "I am not sure.".into();
        };
        let tail = &prompt[asked_at..];
        let given = ["answer:", "A:"]
            .iter()
            .filter_map(|tag| tail.find(tag).map(|i| tail[i + tag.len()..].trim_start()))
            .next()
            .unwrap_or("");
        let answer = [right, wrong]
            .into_iter()
            .filter(|a| given.starts_with(a))
            .max_by_key(|a| a.len());
        let knows = |prefix: &str| prefix.contains(&format!("accepted answer is {right}"));
        let Some(answer) = answer else {
            // A request for background knowledge.
            return if self.slips(right) {
                format!("This is a {topic} question.")
            } else {
                format!("In {topic}, the accepted answer is {right}.")
            };
        };
        if prompt.contains("give your explanation") || prompt.contains("update your explanation") {
            let against = prompt.contains("Assuming the answer is incorrect")
                || prompt.contains("Another agent think the answer is correct,");
            return match (against, answer == right, self.slips(answer)) {
                (_, _, true) => format!("The answer {answer} is a common reply about {topic}."),
                (false, true, _) => format!("The accepted answer is {right}."),
                (true, false, _) => format!("The accepted answer is {right}, not {answer}."),
                (false, false, _) => format!("The answer {answer} fits what is known about {topic}."),
                (true, true, _) => format!("The answer {answer} may be imprecise."),
            };
        }
        let mut verdict = answer == right;
        if !knows(&prompt[..asked_at]) && self.slips(answer) {
            verdict = !verdict;
        }
        if prompt.contains("Respond with 1 if") {
            return if verdict { "1" } else { "0" }.into();
        }
        if verdict { "Yes" } else { "No" }.into()
    }
}

impl Backend for QuizModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> &[Capability] {
        &self.capabilities
    }

    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<BackendResponse, BackendError> {
        Ok(BackendResponse::text(self.respond(prompt)))
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        Ok(hashed_bow(text, 64))
    }
}
