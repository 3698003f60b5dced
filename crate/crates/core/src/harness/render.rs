use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{BucketRow, CategoryReport};
use crate::controller::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Table,
}

/// Deterministic serialization of a report.
///
/// * `json`: the full report.
/// * `csv`: one row per difficulty bucket plus an `all` row, plot-ready.
/// * `table`: cumulative solved rates with stage deltas, one dataset column.
pub fn render_report(report: &CategoryReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => render_csv(report).into_bytes(),
        ReportFormat::Table => render_table(report).into_bytes(),
    }
}

fn csv_row(out: &mut String, row: &BucketRow) {
    let bound = |b: Option<u32>| b.map(|v| v.to_string()).unwrap_or_default();
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        row.bucket,
        bound(row.lo),
        bound(row.hi),
        row.population,
        row.solved_without_tests,
        row.solved_with_tests,
        row.solved_with_remediation,
        row.unsolved
    );
}

fn render_csv(report: &CategoryReport) -> String {
    let mut out = String::from(
        "bucket,lo,hi,population,solved_without_tests,solved_with_tests,solved_with_remediation,unsolved\n",
    );
    for row in &report.buckets {
        csv_row(&mut out, row);
    }
    csv_row(
        &mut out,
        &BucketRow {
            bucket: "all".into(),
            lo: None,
            hi: None,
            population: report.total,
            solved_without_tests: report.count(Category::SolvedWithoutTests),
            solved_with_tests: report.count(Category::SolvedWithTests),
            solved_with_remediation: report.count(Category::SolvedWithRemediation),
            unsolved: report.count(Category::Unsolved),
        },
    );
    out
}

fn render_table(report: &CategoryReport) -> String {
    let header = format!(
        "{} (#{}), {} tests",
        report.dataset,
        report.total,
        criterion_name(report)
    );
    let mut rows: Vec<(String, String, String)> = report
        .cumulative
        .iter()
        .map(|c| {
            (
                c.label.clone(),
                format!("{:.2}%", c.percent),
                c.delta.map(|d| format!("(+{d:.2}%)")).unwrap_or_default(),
            )
        })
        .collect();
    rows.push((
        "Problems that are still unsolved".into(),
        format!("{:.2}%", report.percent(Category::Unsolved)),
        String::new(),
    ));
    let label_w = rows
        .iter()
        .map(|r| r.0.len())
        .chain(["Improvement using tests".len(), "Category".len()])
        .max()
        .unwrap();
    let pct_w = rows.iter().map(|r| r.1.len()).max().unwrap().max(7);
    let delta_w = rows.iter().map(|r| r.2.len()).max().unwrap();
    let width = label_w + 2 + pct_w + 2 + delta_w;

    let mut out = String::new();
    let _ = writeln!(out, "{:<label_w$}  {header}", "Category");
    let _ = writeln!(out, "{}", "-".repeat(width.max(label_w + 2 + header.len())));
    for (label, pct, delta) in &rows {
        let _ = writeln!(out, "{label:<label_w$}  {pct:>pct_w$}  {delta}").map(|_| ());
    }
    let _ = writeln!(out, "{}", "-".repeat(width.max(label_w + 2 + header.len())));
    let _ = writeln!(
        out,
        "{:<label_w$}  {:>pct_w$}",
        "Improvement using tests",
        format!("{:.2}%", report.improvement_using_tests)
    );
    // trailing spaces from empty delta cells
    out.lines().map(|l| format!("{}\n", l.trim_end())).collect()
}

fn criterion_name(report: &CategoryReport) -> &'static str {
    match report.criterion {
        super::Criterion::Public => "public",
        super::Criterion::Private => "private",
    }
}
