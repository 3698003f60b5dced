#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::Deserialize;
use tddgen::llm::{
    BackendError, CompletionRequest, CompletionResult, FinishReason, Role, ScriptedBackend,
};
use tddgen::problem::{load_dataset_file, Dataset};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini")
}

pub fn mini_dataset() -> Dataset {
    load_dataset_file(&fixture_dir().join("mini.jsonl")).expect("mini dataset loads")
}

#[derive(Debug, Deserialize)]
pub struct Expected {
    pub category: String,
    pub halt_reason: String,
    pub attempts: usize,
    pub private_category: String,
}

pub fn expected_outcomes() -> BTreeMap<String, Expected> {
    let text = std::fs::read_to_string(fixture_dir().join("expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Program text for version `v` of a fixture problem; `None` means the model
/// answers in prose without code.
fn program(problem: &str, v: u32) -> Option<String> {
    let body = match (problem, v) {
        ("mini-capped-add", _) => "def add(a, b):\n    return a + b",
        ("mini-palindrome", 0) => "def is_palindrome(s):\n    return s == s[::-1]",
        ("mini-palindrome", _) => {
            "def is_palindrome(s):\n    s = s.lower()\n    return s == s[::-1]"
        }
        ("mini-line-sum", 0) => "print(max(map(int, input().split())))",
        ("mini-line-sum", 1) => "print(len(input().split()))",
        ("mini-line-sum", 2) => "print(input().split()[0])",
        ("mini-line-sum", _) => "print(sum(map(int, input().split())))",
        ("mini-double", 0 | 1) => "print(0)",
        ("mini-double", v) if v % 2 == 0 => "input()\nprint(10)",
        ("mini-double", _) => "input()\nprint(4)",
        ("mini-reverse", _) => "print(input())",
        ("mini-gcd", 0) => "a, b = map(int, input().split())\nprint(min(a, b))",
        ("mini-gcd", _) => return None,
        (other, _) => panic!("no script for {other}"),
    };
    Some(format!("# version {v}\n{body}\n"))
}

fn version_after(text: &str, marker: &str) -> Option<u32> {
    let at = text.find(marker)? + marker.len();
    let digits: String = text[at..]
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.parse().ok()
}

/// A deterministic, stateless stand-in for the model. The problem is found
/// by its prompt (or by the tag the analyzer writes); the code version
/// travels through the `# version N` comment and the advice text.
pub fn fixture_reply(
    dataset: &Dataset,
    req: &CompletionRequest,
) -> Result<CompletionResult, BackendError> {
    let system = &req.messages[0].content;
    let user = req
        .messages
        .iter()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .unwrap_or_default();
    let by_prompt = || {
        dataset
            .problems
            .iter()
            .find(|p| user.contains(&p.prompt))
            .map(|p| p.id.clone())
    };
    let text = if system.contains("expert Python 3 programmer") {
        let id = by_prompt().expect("coder prompt names a fixture problem");
        let v = version_after(user, "Write version ").unwrap_or(
            if user.contains("Your code must pass these tests") {
                1
            } else {
                0
            },
        );
        match program(&id, v) {
            Some(code) => format!("Here is my solution.\n\n```python\n{code}```\n"),
            None => "Sorry, this one is beyond me.".to_string(),
        }
    } else if system.contains("code reviewer") {
        let id = by_prompt().expect("analyzer prompt names a fixture problem");
        if id == "mini-gcd" {
            return Ok(CompletionResult {
                finish_reason: FinishReason::Error,
                ..CompletionResult::stop("", "fixture")
            });
        }
        let v = version_after(user, "# version ").unwrap_or(0);
        format!("Problem {id}, version {v}: the output does not match the expected values for the failing tests.")
    } else if system.contains("repair plan") {
        let id = user
            .split("Problem ")
            .nth(1)
            .and_then(|s| s.split(',').next())
            .expect("analysis carries the problem id");
        let v = version_after(user, ", version ").expect("analysis carries the version");
        format!(
            "Recompute the answer for {id}. Write version {} of the program.",
            v + 1
        )
    } else {
        panic!("unrecognized agent system message: {system}");
    };
    Ok(CompletionResult::stop(text, "fixture"))
}

pub fn fixture_backend(dataset: Arc<Dataset>) -> ScriptedBackend {
    ScriptedBackend::new("fixture", move |req| fixture_reply(&dataset, req))
}

/// Default settings; the bundled store was recorded under the default model id.
pub fn settings() -> tddgen::agents::AgentSettings {
    tddgen::agents::AgentSettings::default()
}

/// Runs the mini dataset against `engine` sequentially with the real verifier.
pub fn run_mini(engine: &tddgen::llm::Engine) -> Vec<tddgen::RunTranscript> {
    let dataset = mini_dataset();
    let templates = tddgen::agents::TemplateSet::builtin();
    let settings = settings();
    let ctx = tddgen::agents::AgentContext {
        engine,
        templates: &templates,
        settings: &settings,
    };
    let verifier = tddgen::Verifier::bundled().unwrap();
    tddgen::harness::run_dataset(&dataset, &tddgen::LoopConfig::default(), &ctx, &verifier, 1)
        .unwrap()
        .into_iter()
        .map(|r| r.expect("no infrastructure failure"))
        .collect()
}

/// Records a fresh replay store for the mini dataset at `path`.
pub fn record_store(path: &std::path::Path) -> Vec<tddgen::RunTranscript> {
    let _ = std::fs::remove_file(path);
    let store = Arc::new(tddgen::llm::ReplayStore::open(path).unwrap());
    let engine =
        tddgen::llm::Engine::record(Arc::new(fixture_backend(Arc::new(mini_dataset()))), store);
    run_mini(&engine)
}

pub fn replay_engine() -> tddgen::llm::Engine {
    let store = tddgen::llm::ReplayStore::open(fixture_dir().join("replay.jsonl")).unwrap();
    tddgen::llm::Engine::replay(Arc::new(store))
}

/// Treats the candidate source as a verdict script: each whitespace-separated
/// token after `fail` names a test that fails; `pass` passes everything.
pub struct FakeChecker;

impl tddgen::verifier::Checker for FakeChecker {
    fn check(
        &self,
        source: &str,
        _problem: &tddgen::Problem,
        suite: &[tddgen::TestCase],
    ) -> Result<tddgen::VerificationReport, tddgen::verifier::VerifyError> {
        let failing: Vec<&str> = source
            .split_whitespace()
            .skip_while(|w| *w != "fail")
            .skip(1)
            .collect();
        let results = suite
            .iter()
            .map(|t| tddgen::verifier::TestResult {
                test_id: t.id.clone(),
                status: if failing.contains(&t.id.as_str()) {
                    tddgen::verifier::TestStatus::WrongAnswer
                } else {
                    tddgen::verifier::TestStatus::Pass
                },
                input: t.input_value(),
                actual: Some(serde_json::json!("?")),
                expected: t.expected_value(),
                diagnostic: String::new(),
            })
            .collect();
        Ok(tddgen::VerificationReport::from_results(results))
    }
}

/// A three-test stdio problem for driving the loop with [`FakeChecker`].
pub fn toy_problem() -> tddgen::Problem {
    use tddgen::TestCase;
    tddgen::Problem {
        id: "toy".into(),
        title: "Toy".into(),
        prompt: "Print something.".into(),
        mode: tddgen::ProblemMode::FullProgram,
        entrypoint: None,
        difficulty_score: None,
        public_tests: vec![
            TestCase::stdio("t1", "1\n", "1\n"),
            TestCase::stdio("t2", "2\n", "2\n"),
            TestCase::stdio("t3", "3\n", "3\n"),
        ],
        private_tests: vec![],
    }
}

/// One scripted coder reply.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Pass,
    Fail(Vec<&'static str>),
    NoCode,
}

impl Reply {
    pub fn text(&self) -> String {
        match self {
            Reply::Pass => "```python\npass\n```".into(),
            Reply::Fail(ids) => format!("```python\nfail {}\n```", ids.join(" ")),
            Reply::NoCode => "Sorry, no idea.".into(),
        }
    }
}

/// Backend that hands out coder replies in order and canned text for the
/// other agents. Panics if the coder is called more often than scripted.
pub fn queue_backend(replies: Vec<Reply>) -> ScriptedBackend {
    let queue = std::sync::Mutex::new(std::collections::VecDeque::from(replies));
    ScriptedBackend::from_text("queue", move |req| {
        if req.messages[0]
            .content
            .contains("expert Python 3 programmer")
        {
            queue
                .lock()
                .unwrap()
                .pop_front()
                .expect("coder called too often")
                .text()
        } else {
            "Look at the failing tests again.".into()
        }
    })
}
