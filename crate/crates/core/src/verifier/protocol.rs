//! Wire format between the verifier and the runner shim.
//!
//! The parent writes one job document to the shim's stdin. The shim answers
//! with one JSON object per line: a result per test in suite order, then a
//! `{"done": true, "count": n}` summary. A malformed job yields a single
//! `{"error": ...}` record instead.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::TestStatus;
use crate::problem::{ProblemMode, TestCase};

#[derive(Debug, Clone, Serialize)]
pub struct ShimJob<'a> {
    pub source: &'a str,
    pub mode: ProblemMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entrypoint: Option<&'a str>,
    pub tests: Vec<ShimTest<'a>>,
    pub workdir: String,
    pub memory_bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShimTest<'a> {
    pub id: &'a str,
    pub kind: crate::problem::TestKind,
    pub input: Value,
    pub expected: Value,
    pub timeout_ms: u64,
}

impl<'a> ShimTest<'a> {
    pub fn new(test: &'a TestCase, default_timeout_ms: u64) -> Self {
        Self {
            id: &test.id,
            kind: test.kind(),
            input: test.input_value(),
            expected: test.expected_value(),
            timeout_ms: test
                .timeout_override
                .map(|d| d.as_millis() as u64)
                .unwrap_or(default_timeout_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShimResultLine {
    pub test_id: String,
    pub status: TestStatus,
    #[serde(default)]
    pub actual: Option<Value>,
    #[serde(default)]
    pub diagnostic: String,
    #[serde(default)]
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ShimLine {
    Done(DoneRecord),
    Error(ErrorRecord),
    Result(ShimResultLine),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoneRecord {
    pub done: bool,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorRecord {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}; line: {line:?}")]
pub struct ProtocolError {
    pub message: String,
    pub line: String,
}

impl ProtocolError {
    fn new(message: impl Into<String>, line: &str) -> Self {
        Self {
            message: message.into(),
            line: line.to_string(),
        }
    }
}

/// Incremental parser. Any prefix of a valid stream that ends on a line
/// boundary leaves the parser in a consistent partial state.
#[derive(Debug, Clone)]
pub struct StreamParser {
    expected_ids: Vec<String>,
    results: Vec<ShimResultLine>,
    done: bool,
    runner_error: Option<String>,
}

impl StreamParser {
    pub fn new(expected_ids: Vec<String>) -> Self {
        Self {
            expected_ids,
            results: Vec::new(),
            done: false,
            runner_error: None,
        }
    }

    pub fn feed_line(&mut self, line: &str) -> Result<(), ProtocolError> {
        if line.trim().is_empty() {
            return Ok(());
        }
        if self.done || self.runner_error.is_some() {
            return Err(ProtocolError::new("output after final record", line));
        }
        let parsed: ShimLine = serde_json::from_str(line)
            .map_err(|e| ProtocolError::new(format!("unparseable line: {e}"), line))?;
        match parsed {
            ShimLine::Result(r) => {
                let pos = self.results.len();
                match self.expected_ids.get(pos) {
                    Some(id) if *id == r.test_id => self.results.push(r),
                    Some(id) => {
                        return Err(ProtocolError::new(
                            format!(
                                "expected result for {id:?} at position {pos}, got {:?}",
                                r.test_id
                            ),
                            line,
                        ))
                    }
                    None => return Err(ProtocolError::new("more results than tests", line)),
                }
            }
            ShimLine::Done(d) => {
                if !d.done || d.count != self.expected_ids.len() || self.results.len() != d.count {
                    return Err(ProtocolError::new(
                        format!(
                            "summary mismatch: {} of {} results received",
                            self.results.len(),
                            self.expected_ids.len()
                        ),
                        line,
                    ));
                }
                self.done = true;
            }
            ShimLine::Error(e) => self.runner_error = Some(e.error),
        }
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.done
    }

    pub fn runner_error(&self) -> Option<&str> {
        self.runner_error.as_deref()
    }

    pub fn results(&self) -> &[ShimResultLine] {
        &self.results
    }

    /// Ids that have not been reported yet, in suite order.
    pub fn missing_ids(&self) -> &[String] {
        &self.expected_ids[self.results.len()..]
    }

    pub fn into_results(self) -> Vec<ShimResultLine> {
        self.results
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("t{i}")).collect()
    }

    fn line(id: &str, status: &str) -> String {
        format!(
            r#"{{"test_id":"{id}","status":"{status}","actual":"x","diagnostic":"","elapsed_ms":3}}"#
        )
    }

    #[test]
    fn complete_stream() {
        let mut p = StreamParser::new(ids(2));
        p.feed_line(&line("t1", "pass")).unwrap();
        p.feed_line(&line("t2", "wrong_answer")).unwrap();
        assert!(!p.is_complete());
        p.feed_line(r#"{"done":true,"count":2}"#).unwrap();
        assert!(p.is_complete());
        assert_eq!(p.results()[1].status, TestStatus::WrongAnswer);
        assert!(p.feed_line(&line("t3", "pass")).is_err());
    }

    #[test]
    fn out_of_order_result_is_rejected_with_raw_line() {
        let mut p = StreamParser::new(ids(2));
        let raw = line("t2", "pass");
        let err = p.feed_line(&raw).unwrap_err();
        assert_eq!(err.line, raw);
    }

    #[test]
    fn garbage_and_unknown_status() {
        let mut p = StreamParser::new(ids(1));
        assert!(p.feed_line("hello").is_err());
        assert!(p.feed_line(&line("t1", "exploded")).is_err());
    }

    #[test]
    fn premature_summary() {
        let mut p = StreamParser::new(ids(2));
        p.feed_line(&line("t1", "pass")).unwrap();
        assert!(p.feed_line(r#"{"done":true,"count":2}"#).is_err());
    }

    #[test]
    fn error_record() {
        let mut p = StreamParser::new(ids(1));
        p.feed_line(r#"{"error":"malformed job: missing field 'tests'"}"#)
            .unwrap();
        assert!(p.runner_error().unwrap().contains("tests"));
    }

    #[test]
    fn every_prefix_is_a_consistent_partial_report() {
        let stream = [
            line("t1", "pass"),
            line("t2", "runtime_error"),
            line("t3", "timeout"),
            r#"{"done":true,"count":3}"#.to_string(),
        ];
        for cut in 0..=stream.len() {
            let mut p = StreamParser::new(ids(3));
            for l in &stream[..cut] {
                p.feed_line(l).unwrap();
            }
            let got = cut.min(3);
            assert_eq!(p.results().len(), got);
            assert_eq!(p.missing_ids().len(), 3 - got);
            assert_eq!(p.is_complete(), cut == 4);
        }
    }
}
