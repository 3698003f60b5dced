//! Problems, test suites and the JSON-lines dataset format.

use std::collections::HashSet;
use std::io::BufRead;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::difficulty::{self, MAX_SCORE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemMode {
    /// Implement a function with a given signature.
    FunctionLevel,
    /// Write a whole program that reads stdin and writes stdout.
    FullProgram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    FunctionCall,
    Stdio,
}

impl TestKind {
    pub fn for_mode(mode: ProblemMode) -> Self {
        match mode {
            ProblemMode::FunctionLevel => TestKind::FunctionCall,
            ProblemMode::FullProgram => TestKind::Stdio,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestPayload {
    FunctionCall { args: Vec<Value>, expected: Value },
    Stdio { stdin: String, expected: String },
}

/// A single check: either a call with arguments or a stdin/stdout pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TestCaseRecord", into = "TestCaseRecord")]
pub struct TestCase {
    pub id: String,
    pub payload: TestPayload,
    pub timeout_override: Option<Duration>,
}

impl TestCase {
    pub fn function_call(id: impl Into<String>, args: Vec<Value>, expected: Value) -> Self {
        Self {
            id: id.into(),
            payload: TestPayload::FunctionCall { args, expected },
            timeout_override: None,
        }
    }

    pub fn stdio(
        id: impl Into<String>,
        stdin: impl Into<String>,
        expected: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            payload: TestPayload::Stdio {
                stdin: stdin.into(),
                expected: expected.into(),
            },
            timeout_override: None,
        }
    }

    pub fn kind(&self) -> TestKind {
        match self.payload {
            TestPayload::FunctionCall { .. } => TestKind::FunctionCall,
            TestPayload::Stdio { .. } => TestKind::Stdio,
        }
    }

    /// The input as it appears on the wire: an argument array or stdin text.
    pub fn input_value(&self) -> Value {
        match &self.payload {
            TestPayload::FunctionCall { args, .. } => Value::Array(args.clone()),
            TestPayload::Stdio { stdin, .. } => Value::String(stdin.clone()),
        }
    }

    pub fn expected_value(&self) -> Value {
        match &self.payload {
            TestPayload::FunctionCall { expected, .. } => expected.clone(),
            TestPayload::Stdio { expected, .. } => Value::String(expected.clone()),
        }
    }
}

// Wire shape of a test case. `expected` distinguishes an explicit `null`
// (a function returning None) from a missing key.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestCaseRecord {
    id: String,
    kind: TestKind,
    input: Value,
    #[serde(default, deserialize_with = "present")]
    expected: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timeout_ms: Option<u64>,
}

fn present<'de, D: Deserializer<'de>>(de: D) -> Result<Option<Value>, D::Error> {
    Value::deserialize(de).map(Some)
}

impl TryFrom<TestCaseRecord> for TestCase {
    type Error = String;

    fn try_from(rec: TestCaseRecord) -> Result<Self, String> {
        let expected = rec
            .expected
            .ok_or_else(|| format!("test {:?} has no expected value", rec.id))?;
        let payload = match rec.kind {
            TestKind::FunctionCall => match rec.input {
                Value::Array(args) => TestPayload::FunctionCall { args, expected },
                other => {
                    return Err(format!(
                        "test {:?}: function_call input must be an array, got {other}",
                        rec.id
                    ))
                }
            },
            TestKind::Stdio => match (rec.input, expected) {
                (Value::String(stdin), Value::String(expected)) => {
                    TestPayload::Stdio { stdin, expected }
                }
                _ => {
                    return Err(format!(
                        "test {:?}: stdio input and expected must be strings",
                        rec.id
                    ))
                }
            },
        };
        if rec.timeout_ms == Some(0) {
            return Err(format!("test {:?}: timeout_ms must be positive", rec.id));
        }
        Ok(TestCase {
            id: rec.id,
            payload,
            timeout_override: rec.timeout_ms.map(Duration::from_millis),
        })
    }
}

impl From<TestCase> for TestCaseRecord {
    fn from(tc: TestCase) -> Self {
        let kind = tc.kind();
        let (input, expected) = match tc.payload {
            TestPayload::FunctionCall { args, expected } => (Value::Array(args), expected),
            TestPayload::Stdio { stdin, expected } => {
                (Value::String(stdin), Value::String(expected))
            }
        };
        TestCaseRecord {
            id: tc.id,
            kind,
            input,
            expected: Some(expected),
            timeout_ms: tc.timeout_override.map(|d| d.as_millis() as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub id: String,
    pub title: String,
    pub prompt: String,
    pub mode: ProblemMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entrypoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty_score: Option<u64>,
    pub public_tests: Vec<TestCase>,
    #[serde(default)]
    pub private_tests: Vec<TestCase>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Violation {
    #[error("problem id is empty")]
    EmptyId,
    #[error("public_tests is empty")]
    NoPublicTests,
    #[error("function_level problem has no entrypoint")]
    MissingEntrypoint,
    #[error("test {test_id:?} has kind {kind:?}, which does not match mode {mode:?}")]
    KindMismatch {
        test_id: String,
        kind: TestKind,
        mode: ProblemMode,
    },
    #[error("test id {0:?} appears more than once")]
    DuplicateTestId(String),
    #[error("difficulty_score {0} exceeds {MAX_SCORE}")]
    ScoreOutOfRange(u64),
    #[error("problem id {0:?} appears more than once")]
    DuplicateProblemId(String),
}

impl Problem {
    pub fn validate(&self) -> Result<(), Violation> {
        if self.id.is_empty() {
            return Err(Violation::EmptyId);
        }
        if self.public_tests.is_empty() {
            return Err(Violation::NoPublicTests);
        }
        if self.mode == ProblemMode::FunctionLevel
            && self
                .entrypoint
                .as_deref()
                .is_none_or(|e| e.trim().is_empty())
        {
            return Err(Violation::MissingEntrypoint);
        }
        if let Some(score) = self.difficulty_score {
            difficulty::bucket_for_score(score).map_err(|_| Violation::ScoreOutOfRange(score))?;
        }
        let want = TestKind::for_mode(self.mode);
        // one id namespace across both suites: enforces per-suite uniqueness and disjointness
        let mut seen = HashSet::new();
        for tc in self.public_tests.iter().chain(&self.private_tests) {
            if tc.kind() != want {
                return Err(Violation::KindMismatch {
                    test_id: tc.id.clone(),
                    kind: tc.kind(),
                    mode: self.mode,
                });
            }
            if !seen.insert(tc.id.as_str()) {
                return Err(Violation::DuplicateTestId(tc.id.clone()));
            }
        }
        Ok(())
    }

    pub fn public_suite(&self) -> Vec<TestCase> {
        self.public_tests.clone()
    }

    /// Public tests followed by private tests; grading requires all of them.
    pub fn private_suite(&self) -> Vec<TestCase> {
        self.public_tests
            .iter()
            .chain(&self.private_tests)
            .cloned()
            .collect()
    }

    pub fn bucket_name(&self) -> &'static str {
        // validated problems never carry an out-of-range score
        difficulty::bucket_name(self.difficulty_score).unwrap_or(difficulty::UNRATED)
    }
}

/// Returns the (public, private) suites of a problem.
pub fn split_suites(problem: &Problem) -> (Vec<TestCase>, Vec<TestCase>) {
    (problem.public_suite(), problem.private_suite())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub problems: Vec<Problem>,
}

impl Dataset {
    pub fn get(&self, id: &str) -> Option<&Problem> {
        self.problems.iter().find(|p| p.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    JsonLines,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("line {line}: at `{path}`: {message}")]
    Parse {
        line: usize,
        path: String,
        message: String,
    },
    #[error("line {line}: problem {problem_id:?}: {violation}")]
    Invalid {
        line: usize,
        problem_id: String,
        violation: Violation,
    },
    #[error("reading dataset: {0}")]
    Io(#[from] std::io::Error),
}

impl DatasetError {
    pub fn is_validation(&self) -> bool {
        !matches!(self, DatasetError::Io(_))
    }
}

/// Parses and validates a dataset. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn load_dataset(
    source: impl BufRead,
    name: impl Into<String>,
    format: DatasetFormat,
) -> Result<Dataset, DatasetError> {
    let DatasetFormat::JsonLines = format;
    let mut problems: Vec<Problem> = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let problem: Problem =
            serde_path_to_error::deserialize(de).map_err(|e| DatasetError::Parse {
                line: lineno,
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        let invalid = |violation| DatasetError::Invalid {
            line: lineno,
            problem_id: problem.id.clone(),
            violation,
        };
        problem.validate().map_err(invalid)?;
        if !ids.insert(problem.id.clone()) {
            return Err(invalid(Violation::DuplicateProblemId(problem.id.clone())));
        }
        problems.push(problem);
    }
    Ok(Dataset {
        name: name.into(),
        problems,
    })
}

pub fn load_dataset_file(path: &std::path::Path) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_dataset(
        std::io::BufReader::new(file),
        name,
        DatasetFormat::JsonLines,
    )
}

/// Canonical JSON-lines rendering, one problem per line.
pub fn render_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    for p in &dataset.problems {
        out.push_str(&serde_json::to_string(p).expect("problem serializes"));
        out.push('\n');
    }
    out
}
