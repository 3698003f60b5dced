//! Runs candidate programs against test suites in a child process and turns
//! the outcome into structured reports and model-readable feedback.

mod compare;
mod feedback;
pub mod protocol;

pub use compare::{normalize_output, stdout_matches, values_match, Comparison, FLOAT_TOLERANCE};
pub use feedback::{format_feedback, FeedbackError, DEFAULT_DIAGNOSTIC_BUDGET};

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::{BufRead, BufReader, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::problem::{Problem, ProblemMode, TestCase, TestPayload};
use protocol::{ProtocolError, ShimJob, ShimResultLine, ShimTest, StreamParser};

/// The bundled runner shim.
pub const SHIM_SOURCE: &str = include_str!("../../shim/runner_shim.py");

const STDERR_LIMIT: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionLimits {
    pub per_test_timeout: Duration,
    pub memory_cap: u64,
    pub total_suite_timeout: Duration,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        Self {
            per_test_timeout: Duration::from_secs(10),
            memory_cap: 512 * 1024 * 1024,
            total_suite_timeout: Duration::from_secs(120),
        }
    }
}

impl ExecutionLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.per_test_timeout.is_zero()
            || self.total_suite_timeout.is_zero()
            || self.memory_cap == 0
        {
            return Err("execution limits must be positive".into());
        }
        if self.per_test_timeout > self.total_suite_timeout {
            return Err("per-test timeout exceeds total suite timeout".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Pass,
    WrongAnswer,
    RuntimeError,
    Timeout,
    SetupError,
}

impl TestStatus {
    pub const ALL: [TestStatus; 5] = [
        TestStatus::Pass,
        TestStatus::WrongAnswer,
        TestStatus::RuntimeError,
        TestStatus::Timeout,
        TestStatus::SetupError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestStatus::Pass => "pass",
            TestStatus::WrongAnswer => "wrong_answer",
            TestStatus::RuntimeError => "runtime_error",
            TestStatus::Timeout => "timeout",
            TestStatus::SetupError => "setup_error",
        }
    }
}

impl std::fmt::Display for TestStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_id: String,
    pub status: TestStatus,
    pub input: Value,
    pub actual: Option<Value>,
    pub expected: Value,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub results: Vec<TestResult>,
    pub all_passed: bool,
    pub failing_set: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executed_lines: Option<Vec<u32>>,
}

impl VerificationReport {
    pub fn from_results(results: Vec<TestResult>) -> Self {
        let failing_set: BTreeSet<String> = results
            .iter()
            .filter(|r| r.status != TestStatus::Pass)
            .map(|r| r.test_id.clone())
            .collect();
        Self {
            all_passed: failing_set.is_empty(),
            failing_set,
            results,
            executed_lines: None,
        }
    }

    /// A report where every test failed before running.
    pub fn setup_failure(suite: &[TestCase], diagnostic: &str) -> Self {
        Self::from_results(
            suite
                .iter()
                .map(|t| TestResult {
                    test_id: t.id.clone(),
                    status: TestStatus::SetupError,
                    input: t.input_value(),
                    actual: None,
                    expected: t.expected_value(),
                    diagnostic: diagnostic.to_string(),
                })
                .collect(),
        )
    }

    pub fn statuses(&self) -> Vec<TestStatus> {
        self.results.iter().map(|r| r.status).collect()
    }

    pub fn count(&self, status: TestStatus) -> usize {
        self.results.iter().filter(|r| r.status == status).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("invalid verification request: {0}")]
    InvalidRequest(String),
    #[error("could not start the runner: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("runner protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("runner failed (exit code {code:?}): {message}")]
    Runner { code: Option<i32>, message: String },
    #[error("sandbox i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Anything that can grade a candidate against a suite. The loop depends on
/// this rather than on [`Verifier`] so it can be driven by fakes in tests.
pub trait Checker: Send + Sync {
    fn check(
        &self,
        source: &str,
        problem: &Problem,
        suite: &[TestCase],
    ) -> Result<VerificationReport, VerifyError>;
}

/// How to launch the runner shim.
#[derive(Debug, Clone)]
pub struct ShimCommand {
    pub program: PathBuf,
    pub args: Vec<OsString>,
}

#[derive(Debug)]
struct ShimInstall {
    _dir: tempfile::TempDir,
    script: PathBuf,
}

#[derive(Debug, Clone)]
pub struct Verifier {
    command: ShimCommand,
    limits: ExecutionLimits,
    comparison: Comparison,
    // keeps the extracted bundled shim alive
    _install: Option<Arc<ShimInstall>>,
}

/// Interpreter used for the bundled shim: `$TDDGEN_PYTHON` or `python3`.
pub fn default_python() -> PathBuf {
    std::env::var_os("TDDGEN_PYTHON")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("python3"))
}

impl Verifier {
    /// Uses the bundled shim under the default interpreter.
    pub fn bundled() -> std::io::Result<Self> {
        Self::bundled_with(default_python())
    }

    pub fn bundled_with(python: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = tempfile::Builder::new().prefix("tddgen-shim-").tempdir()?;
        let script = dir.path().join("runner_shim.py");
        std::fs::write(&script, SHIM_SOURCE)?;
        let command = ShimCommand {
            program: python.into(),
            args: vec!["-I".into(), "-B".into(), script.clone().into_os_string()],
        };
        Ok(Self {
            command,
            limits: ExecutionLimits::default(),
            comparison: Comparison::default(),
            _install: Some(Arc::new(ShimInstall { _dir: dir, script })),
        })
    }

    /// Uses an externally provided shim command.
    pub fn with_command(command: ShimCommand) -> Self {
        Self {
            command,
            limits: ExecutionLimits::default(),
            comparison: Comparison::default(),
            _install: None,
        }
    }

    pub fn limits(mut self, limits: ExecutionLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn comparison(mut self, comparison: Comparison) -> Self {
        self.comparison = comparison;
        self
    }

    pub fn execution_limits(&self) -> &ExecutionLimits {
        &self.limits
    }

    pub fn shim_script(&self) -> Option<&Path> {
        self._install.as_ref().map(|i| i.script.as_path())
    }

    /// Runs `source` against `suite` in a fresh working directory and its own
    /// process group.
    pub fn verify(
        &self,
        source: &str,
        suite: &[TestCase],
        mode: ProblemMode,
        entrypoint: Option<&str>,
    ) -> Result<VerificationReport, VerifyError> {
        self.limits
            .validate()
            .map_err(VerifyError::InvalidRequest)?;
        if suite.is_empty() {
            return Err(VerifyError::InvalidRequest("empty test suite".into()));
        }
        if mode == ProblemMode::FunctionLevel && entrypoint.is_none() {
            return Err(VerifyError::InvalidRequest(
                "function_level needs an entrypoint".into(),
            ));
        }
        let workdir = tempfile::Builder::new().prefix("tddgen-run-").tempdir()?;
        let default_timeout = self.limits.per_test_timeout.as_millis() as u64;
        let job = ShimJob {
            source,
            mode,
            entrypoint,
            tests: suite
                .iter()
                .map(|t| ShimTest::new(t, default_timeout))
                .collect(),
            workdir: workdir.path().to_string_lossy().into_owned(),
            memory_bytes: self.limits.memory_cap,
        };
        let job_bytes = serde_json::to_vec(&job).expect("job serializes");

        let mut child = self.spawn(workdir.path())?;
        let pgid = child.id() as i32;
        let mut guard = GroupGuard(pgid);

        if let Some(mut stdin) = child.stdin.take() {
            // a shim that dies early closes the pipe; that surfaces below as an incomplete stream
            let _ = stdin.write_all(&job_bytes);
        }
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");
        let (tx, rx) = mpsc::channel();
        let reader = std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.take(STDERR_LIMIT as u64).read_to_end(&mut buf);
            String::from_utf8_lossy(&buf).into_owned()
        });

        let mut parser = StreamParser::new(suite.iter().map(|t| t.id.clone()).collect());
        let deadline = Instant::now() + self.limits.total_suite_timeout;
        let mut timed_out = false;
        loop {
            let now = Instant::now();
            if now >= deadline {
                timed_out = true;
                break;
            }
            match rx.recv_timeout(deadline - now) {
                Ok(Ok(line)) => {
                    if let Err(e) = parser.feed_line(&line) {
                        guard.kill();
                        let _ = child.wait();
                        return Err(e.into());
                    }
                }
                Ok(Err(e)) => {
                    guard.kill();
                    let _ = child.wait();
                    return Err(VerifyError::Io(e));
                }
                Err(mpsc::RecvTimeoutError::Timeout) => {
                    timed_out = true;
                    break;
                }
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            }
        }
        guard.kill();
        let status = child.wait()?;
        let _ = reader.join();
        let stderr_text = err_reader.join().unwrap_or_default();

        if let Some(message) = parser.runner_error() {
            return Err(VerifyError::Runner {
                code: status.code(),
                message: message.to_string(),
            });
        }
        if !parser.is_complete() && !timed_out && status.code() == Some(1) {
            return Err(VerifyError::Runner {
                code: Some(1),
                message: stderr_text,
            });
        }

        let missing_status = if timed_out {
            TestStatus::Timeout
        } else {
            TestStatus::RuntimeError
        };
        let missing_note = if timed_out {
            format!(
                "suite time limit of {:?} exceeded",
                self.limits.total_suite_timeout
            )
        } else {
            format!("runner exited before reporting this test ({status})\n{stderr_text}")
        };
        let received = parser.results().len();
        let mut results: Vec<TestResult> = parser
            .into_results()
            .into_iter()
            .zip(suite)
            .map(|(line, test)| self.judge(line, test))
            .collect();
        for test in &suite[received..] {
            results.push(TestResult {
                test_id: test.id.clone(),
                status: missing_status,
                input: test.input_value(),
                actual: None,
                expected: test.expected_value(),
                diagnostic: missing_note.clone(),
            });
        }
        Ok(VerificationReport::from_results(results))
    }

    fn spawn(&self, workdir: &Path) -> Result<Child, VerifyError> {
        let mut cmd = Command::new(&self.command.program);
        cmd.args(&self.command.args)
            .current_dir(workdir)
            .env_clear()
            .env("HOME", workdir)
            .env("TMPDIR", workdir)
            .env("LANG", "C.UTF-8")
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONIOENCODING", "utf-8")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0);
        if let Some(path) = std::env::var_os("PATH") {
            cmd.env("PATH", path);
        }
        cmd.spawn().map_err(VerifyError::Spawn)
    }

    /// Pass/wrong-answer verdicts are recomputed here so the comparison rules
    /// (including exact mode) are owned by the parent.
    fn judge(&self, line: ShimResultLine, test: &TestCase) -> TestResult {
        let status = match (line.status, &test.payload) {
            (
                TestStatus::Pass | TestStatus::WrongAnswer,
                TestPayload::FunctionCall { expected, .. },
            ) => {
                match &line.actual {
                    Some(actual) if values_match(actual, expected) => TestStatus::Pass,
                    // a candidate returning None arrives as null
                    None if expected.is_null() => TestStatus::Pass,
                    _ => TestStatus::WrongAnswer,
                }
            }
            (TestStatus::Pass | TestStatus::WrongAnswer, TestPayload::Stdio { expected, .. }) => {
                match line.actual.as_ref().and_then(Value::as_str) {
                    Some(actual) if stdout_matches(actual, expected, self.comparison) => {
                        TestStatus::Pass
                    }
                    _ => TestStatus::WrongAnswer,
                }
            }
            (other, _) => other,
        };
        TestResult {
            test_id: line.test_id,
            status,
            input: test.input_value(),
            actual: line.actual,
            expected: test.expected_value(),
            diagnostic: line.diagnostic,
        }
    }
}

impl Checker for Verifier {
    fn check(
        &self,
        source: &str,
        problem: &Problem,
        suite: &[TestCase],
    ) -> Result<VerificationReport, VerifyError> {
        self.verify(source, suite, problem.mode, problem.entrypoint.as_deref())
    }
}

/// Kills the whole process group when dropped or asked to.
struct GroupGuard(i32);

impl GroupGuard {
    fn kill(&mut self) {
        if self.0 > 0 {
            // SAFETY: signalling a process group we created; ESRCH is harmless.
            unsafe {
                libc::kill(-self.0, libc::SIGKILL);
            }
        }
    }
}

impl Drop for GroupGuard {
    fn drop(&mut self) {
        self.kill();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn default_limits() {
        let l = ExecutionLimits::default();
        assert_eq!(l.per_test_timeout, Duration::from_secs(10));
        assert_eq!(l.memory_cap, 512 << 20);
        assert!(l.validate().is_ok());
        let bad = ExecutionLimits {
            per_test_timeout: Duration::from_secs(200),
            ..l
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn report_invariants() {
        let suite = vec![
            TestCase::function_call("a", vec![], json!(1)),
            TestCase::function_call("b", vec![], json!(2)),
        ];
        let r = VerificationReport::setup_failure(&suite, "SyntaxError");
        assert!(!r.all_passed);
        assert_eq!(r.failing_set.len(), 2);
        assert_eq!(r.count(TestStatus::SetupError), 2);
    }

    #[test]
    fn status_names_round_trip() {
        for s in TestStatus::ALL {
            let v = serde_json::to_value(s).unwrap();
            assert_eq!(v, json!(s.as_str()));
        }
    }
}
