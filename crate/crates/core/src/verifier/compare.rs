//! Output normalization and structural value comparison.

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Relative tolerance for reals (absolute near zero).
pub const FLOAT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Trailing whitespace and trailing blank lines are ignored.
    #[default]
    Normalized,
    /// Byte-for-byte stdout comparison.
    Exact,
}

/// Strips trailing whitespace per line, converts line endings to `\n` and
/// drops trailing blank lines. Nothing else changes.
pub fn normalize_output(raw: &str) -> String {
    let unified = raw.replace("\r\n", "\n").replace('\r', "\n");
    let mut lines: Vec<&str> = unified.split('\n').map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

pub fn stdout_matches(actual: &str, expected: &str, mode: Comparison) -> bool {
    match mode {
        Comparison::Normalized => normalize_output(actual) == normalize_output(expected),
        Comparison::Exact => actual == expected,
    }
}

fn numbers_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= FLOAT_TOLERANCE * b.abs().max(1.0)
}

/// Structural equality on JSON values. Numbers compare within
/// [`FLOAT_TOLERANCE`]; booleans never equal numbers.
pub fn values_match(actual: &Value, expected: &Value) -> bool {
    match (actual, expected) {
        (Value::Number(a), Value::Number(b)) => {
            if let (Some(x), Some(y)) = (a.as_i64(), b.as_i64()) {
                return x == y;
            }
            match (a.as_f64(), b.as_f64()) {
                (Some(x), Some(y)) => numbers_close(x, y),
                _ => a == b,
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_match(x, y))
        }
        (Value::Object(a), Value::Object(b)) => {
            a.len() == b.len()
                && a.iter()
                    .all(|(k, v)| b.get(k).is_some_and(|w| values_match(v, w)))
        }
        _ => actual == expected,
    }
}
