//! Grading transcripts under a public or private criterion and summarizing
//! them into category statistics.

mod batch;
mod render;

pub use batch::{
    read_transcripts, run_dataset, transcript_file_name, write_transcript, BatchError,
};
pub use render::{render_report, ReportFormat};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::controller::{Category, HaltReason, RunTranscript};
use crate::difficulty::{BUCKETS, UNRATED};
use crate::problem::Dataset;
use crate::verifier::{Checker, VerifyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Solved means the public suite passed.
    Public,
    /// Solved additionally requires the held-out private tests to pass.
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradedProblem {
    pub problem_id: String,
    pub bucket: String,
    pub category: Category,
    /// Category the transcript itself reports.
    pub public_category: Category,
    pub halt_reason: HaltReason,
}

impl GradedProblem {
    pub fn downgraded(&self) -> bool {
        self.category != self.public_category
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GradeError {
    #[error("no transcript for problem {0}")]
    MissingTranscript(String),
    #[error("transcript for unknown problem {0}")]
    UnknownProblem(String),
    #[error("verifying private suite of {problem_id}: {source}")]
    Verify {
        problem_id: String,
        #[source]
        source: VerifyError,
    },
}

/// Grades one transcript per dataset problem, in dataset order.
///
/// Under the private criterion a solved problem keeps its category only if
/// its final source also passes public and private tests together;
/// otherwise it is unsolved. Later stages are never consulted, since the run
/// stopped at the first public pass.
pub fn grade_transcripts(
    transcripts: &[RunTranscript],
    dataset: &Dataset,
    criterion: Criterion,
    checker: &dyn Checker,
) -> Result<Vec<GradedProblem>, GradeError> {
    let by_id: HashMap<&str, &RunTranscript> = transcripts
        .iter()
        .map(|t| (t.problem_id.as_str(), t))
        .collect();
    if let Some(t) = transcripts
        .iter()
        .find(|t| dataset.get(&t.problem_id).is_none())
    {
        return Err(GradeError::UnknownProblem(t.problem_id.clone()));
    }
    let mut graded = Vec::with_capacity(dataset.problems.len());
    for problem in &dataset.problems {
        let t = by_id
            .get(problem.id.as_str())
            .ok_or_else(|| GradeError::MissingTranscript(problem.id.clone()))?;
        let public_category = t.outcome.category;
        let mut category = public_category;
        if criterion == Criterion::Private
            && public_category.is_solved()
            && !problem.private_tests.is_empty()
        {
            let source = t.outcome.final_source.as_deref().unwrap_or_default();
            let report = checker
                .check(source, problem, &problem.private_suite())
                .map_err(|source| GradeError::Verify {
                    problem_id: problem.id.clone(),
                    source,
                })?;
            if !report.all_passed {
                category = Category::Unsolved;
            }
        }
        graded.push(GradedProblem {
            problem_id: problem.id.clone(),
            bucket: problem.bucket_name().to_string(),
            category,
            public_category,
            halt_reason: t.outcome.halt_reason,
        });
    }
    Ok(graded)
}

/// `100 * count / total` rounded half-up to two decimals, computed exactly.
pub fn percentage(count: u64, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let hundredths = (count as u128 * 20_000 + total as u128) / (2 * total as u128);
    hundredths as f64 / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: Category,
    pub count: u64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeSolved {
    pub label: String,
    pub solved: u64,
    pub percent: f64,
    /// Gain over the previous cumulative row; absent for the first row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<u32>,
    pub population: u64,
    pub solved_without_tests: u64,
    pub solved_with_tests: u64,
    pub solved_with_remediation: u64,
    pub unsolved: u64,
}

impl BucketRow {
    fn new(bucket: &str, lo: Option<u32>, hi: Option<u32>) -> Self {
        Self {
            bucket: bucket.to_string(),
            lo,
            hi,
            population: 0,
            solved_without_tests: 0,
            solved_with_tests: 0,
            solved_with_remediation: 0,
            unsolved: 0,
        }
    }

    fn add(&mut self, c: Category) {
        self.population += 1;
        *match c {
            Category::SolvedWithoutTests => &mut self.solved_without_tests,
            Category::SolvedWithTests => &mut self.solved_with_tests,
            Category::SolvedWithRemediation => &mut self.solved_with_remediation,
            Category::Unsolved => &mut self.unsolved,
        } += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub dataset: String,
    pub criterion: Criterion,
    pub total: u64,
    pub categories: Vec<CategoryCount>,
    pub cumulative: Vec<CumulativeSolved>,
    pub improvement_using_tests: f64,
    /// Unsolved problems by why their run halted.
    pub halt_reasons: BTreeMap<HaltReason, u64>,
    pub downgraded: u64,
    /// Present when at least one problem carries a difficulty rating.
    pub buckets: Vec<BucketRow>,
}

impl CategoryReport {
    pub fn count(&self, category: Category) -> u64 {
        self.categories
            .iter()
            .find(|c| c.category == category)
            .map_or(0, |c| c.count)
    }

    pub fn percent(&self, category: Category) -> f64 {
        percentage(self.count(category), self.total)
    }

    pub fn solved(&self) -> u64 {
        self.total - self.count(Category::Unsolved)
    }
}

pub const CUMULATIVE_LABELS: [&str; 3] = [
    "Solved with Prompt Alone",
    "Solved once public tests provided",
    "Solved with remediation loop",
];

/// Builds the report from category counts alone (no bucket data).
pub fn summarize_counts(dataset: &str, criterion: Criterion, counts: [u64; 4]) -> CategoryReport {
    let total: u64 = counts.iter().sum();
    let categories = Category::ALL
        .iter()
        .zip(counts)
        .map(|(&category, count)| CategoryCount {
            category,
            count,
            percent: percentage(count, total),
        })
        .collect();
    let mut cumulative = Vec::new();
    let mut solved = 0;
    for (i, label) in CUMULATIVE_LABELS.iter().enumerate() {
        solved += counts[i];
        cumulative.push(CumulativeSolved {
            label: label.to_string(),
            solved,
            percent: percentage(solved, total),
            // the gain is exactly this stage's own count
            delta: (i > 0).then(|| percentage(counts[i], total)),
        });
    }
    CategoryReport {
        dataset: dataset.to_string(),
        criterion,
        total,
        categories,
        cumulative,
        improvement_using_tests: percentage(counts[1] + counts[2], total),
        halt_reasons: BTreeMap::new(),
        downgraded: 0,
        buckets: Vec::new(),
    }
}

/// Counts, percentages, cumulative solved rates, stage deltas, halt reasons
/// and the per-bucket breakdown.
pub fn summarize(graded: &[GradedProblem], dataset: &str, criterion: Criterion) -> CategoryReport {
    let mut counts = [0u64; 4];
    for g in graded {
        counts[Category::ALL.iter().position(|c| *c == g.category).unwrap()] += 1;
    }
    let mut report = summarize_counts(dataset, criterion, counts);
    for g in graded.iter().filter(|g| g.category == Category::Unsolved) {
        // a private-criterion downgrade halted on a public pass
        *report.halt_reasons.entry(g.halt_reason).or_default() += 1;
    }
    report.downgraded = graded.iter().filter(|g| g.downgraded()).count() as u64;

    if graded.iter().any(|g| g.bucket != UNRATED) {
        let mut rows: Vec<BucketRow> = BUCKETS
            .iter()
            .map(|b| BucketRow::new(b.name, Some(b.lo), Some(b.hi)))
            .collect();
        let mut unrated = BucketRow::new(UNRATED, None, None);
        for g in graded {
            match rows.iter_mut().find(|r| r.bucket == g.bucket) {
                Some(row) => row.add(g.category),
                None => unrated.add(g.category),
            }
        }
        if unrated.population > 0 {
            rows.push(unrated);
        }
        report.buckets = rows;
    }
    report
}

/// Cumulative solved after remediation minus solved by prompt alone.
pub fn improvement_using_tests(report: &CategoryReport) -> f64 {
    report.improvement_using_tests
}
