use std::fmt::Write;

use serde_json::Value;

use super::{normalize_output, TestStatus, VerificationReport};

pub const DEFAULT_DIAGNOSTIC_BUDGET: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeedbackError {
    #[error("cannot build failure feedback for a report where every test passed")]
    NothingFailed,
}

fn render_value(v: &Value) -> String {
    match v {
        Value::String(s) => normalize_output(s),
        other => other.to_string(),
    }
}

/// Keeps the last `budget` bytes of a diagnostic; the end of a traceback
/// is where the error is.
fn excerpt(text: &str, budget: usize) -> String {
    let text = text.trim_end();
    if text.len() <= budget {
        return text.to_string();
    }
    let mut start = text.len() - budget;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    format!("[... {start} bytes omitted ...]\n{}", &text[start..])
}

fn block(out: &mut String, label: &str, body: &str) {
    if body.contains('\n') {
        let _ = writeln!(out, "{label}:\n```\n{body}\n```");
    } else {
        let _ = writeln!(out, "{label}: {body}");
    }
}

/// Describes every failing test: id, status, input, expected and actual
/// (normalized) output, and a bounded diagnostic excerpt. Output depends only
/// on the report.
pub fn format_feedback(
    report: &VerificationReport,
    diagnostic_budget: usize,
) -> Result<String, FeedbackError> {
    if report.all_passed {
        return Err(FeedbackError::NothingFailed);
    }
    let failing: Vec<_> = report
        .results
        .iter()
        .filter(|r| r.status != TestStatus::Pass)
        .collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} of {} tests failed.",
        failing.len(),
        report.results.len()
    );
    let mut setup_reported = false;
    for r in failing {
        let _ = writeln!(out, "\n### Failing test {} ({})", r.test_id, r.status);
        block(&mut out, "Input", &render_value(&r.input));
        block(&mut out, "Expected", &render_value(&r.expected));
        match &r.actual {
            Some(actual) => block(&mut out, "Actual", &render_value(actual)),
            None => {
                let _ = writeln!(out, "Actual: (no output)");
            }
        }
        // a setup failure carries the same diagnostic for every test
        let show = !r.diagnostic.trim().is_empty()
            && !(r.status == TestStatus::SetupError && setup_reported);
        if show {
            block(
                &mut out,
                "Diagnostic",
                &excerpt(&r.diagnostic, diagnostic_budget),
            );
        }
        setup_reported |= r.status == TestStatus::SetupError;
    }
    Ok(out)
}
