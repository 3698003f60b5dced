//! The escalation loop: prompt only, then prompt plus public tests, then
//! analyze/advise/regenerate rounds until the public suite passes or a
//! stopping rule fires.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::agents::{self, AgentContext, AgentError, AgentExchange, AgentSettings, Parsed};
use crate::llm::LlmError;
use crate::problem::Problem;
use crate::verifier::{
    format_feedback, Checker, VerificationReport, VerifyError, DEFAULT_DIAGNOSTIC_BUDGET,
};

pub type FailingSet = BTreeSet<String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFlags {
    pub prompt_only: bool,
    pub with_tests: bool,
    pub remediation: bool,
}

impl Default for StageFlags {
    fn default() -> Self {
        Self {
            prompt_only: true,
            with_tests: true,
            remediation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub max_iterations: u32,
    pub repeat_failure_cutoff: u32,
    pub stages: StageFlags,
    /// Feed the failing stage-B code to the first remediation round.
    pub carry_stage_b_code: bool,
    pub feedback_budget: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5,
            repeat_failure_cutoff: 3,
            stages: StageFlags::default(),
            carry_stage_b_code: true,
            feedback_budget: DEFAULT_DIAGNOSTIC_BUDGET,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 || self.repeat_failure_cutoff == 0 {
            return Err("max_iterations and repeat_failure_cutoff must be positive".into());
        }
        if self.repeat_failure_cutoff > self.max_iterations {
            return Err(format!(
                "repeat_failure_cutoff {} exceeds max_iterations {}",
                self.repeat_failure_cutoff, self.max_iterations
            ));
        }
        let s = self.stages;
        if !(s.prompt_only || s.with_tests) {
            return Err(
                "at least one generation stage (prompt_only or with_tests) must be enabled".into(),
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    PromptOnly,
    WithTests,
    Remediation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub stage: Stage,
    /// 1-based round number in the remediation stage, 0 otherwise.
    pub iteration: u32,
    pub source: Option<String>,
    pub report: Option<VerificationReport>,
    /// Tests counted as failing; the whole public suite when no code was produced.
    pub failing_set: FailingSet,
    pub exchanges: Vec<AgentExchange>,
    /// Set when an agent produced nothing usable and the run halted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_error: Option<String>,
}

impl Attempt {
    pub fn passed(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.all_passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    SolvedWithoutTests,
    SolvedWithTests,
    SolvedWithRemediation,
    Unsolved,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::SolvedWithoutTests,
        Category::SolvedWithTests,
        Category::SolvedWithRemediation,
        Category::Unsolved,
    ];

    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::PromptOnly => Category::SolvedWithoutTests,
            Stage::WithTests => Category::SolvedWithTests,
            Stage::Remediation => Category::SolvedWithRemediation,
        }
    }

    pub fn is_solved(self) -> bool {
        self != Category::Unsolved
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::SolvedWithoutTests => "solved_without_tests",
            Category::SolvedWithTests => "solved_with_tests",
            Category::SolvedWithRemediation => "solved_with_remediation",
            Category::Unsolved => "unsolved",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    Passed,
    IterationCap,
    RepeatedFailures,
    AgentError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub category: Category,
    pub final_source: Option<String>,
    pub halt_reason: HaltReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTranscript {
    pub problem_id: String,
    pub attempts: Vec<Attempt>,
    pub outcome: RunOutcome,
    pub config: LoopConfig,
    pub agent_settings: AgentSettings,
    pub template_set: String,
    pub backend_id: String,
}

impl RunTranscript {
    /// The attempt that produced the outcome's final source, if solved.
    pub fn solving_attempt(&self) -> Option<&Attempt> {
        self.attempts.iter().find(|a| a.passed())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopDecision {
    Continue,
    StopIterationCap,
    StopRepeated,
}

/// Stops when the last `repeat_failure_cutoff` failing sets are identical,
/// or when `max_iterations` rounds have run. The repeat rule wins ties.
pub fn should_stop(failing_history: &[FailingSet], config: &LoopConfig) -> StopDecision {
    let cutoff = config.repeat_failure_cutoff as usize;
    if cutoff > 0 && failing_history.len() >= cutoff {
        let tail = &failing_history[failing_history.len() - cutoff..];
        if tail.iter().all(|s| *s == tail[0]) {
            return StopDecision::StopRepeated;
        }
    }
    if failing_history.len() >= config.max_iterations as usize {
        return StopDecision::StopIterationCap;
    }
    StopDecision::Continue
}

/// Recomputes the outcome from the attempts alone.
pub fn classify_outcome(attempts: &[Attempt], config: &LoopConfig) -> RunOutcome {
    if let Some(a) = attempts.iter().find(|a| a.passed()) {
        return RunOutcome {
            category: Category::for_stage(a.stage),
            final_source: a.source.clone(),
            halt_reason: HaltReason::Passed,
        };
    }
    let halt_reason = if attempts.last().is_some_and(|a| a.agent_error.is_some()) {
        HaltReason::AgentError
    } else {
        let history: Vec<FailingSet> = attempts
            .iter()
            .filter(|a| a.stage == Stage::Remediation)
            .map(|a| a.failing_set.clone())
            .collect();
        match should_stop(&history, config) {
            StopDecision::StopRepeated => HaltReason::RepeatedFailures,
            _ => HaltReason::IterationCap,
        }
    };
    RunOutcome {
        category: Category::Unsolved,
        final_source: None,
        halt_reason,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid loop configuration: {0}")]
    Config(String),
    #[error("problem {problem_id}: completion backend failed: {source}")]
    Llm {
        problem_id: String,
        #[source]
        source: LlmError,
    },
    #[error("problem {problem_id}: verification infrastructure failed: {source}")]
    Verify {
        problem_id: String,
        #[source]
        source: VerifyError,
    },
}

const NO_CODE_FEEDBACK: &str =
    "The previous reply did not contain a code block, so none of the tests could be run. Every test is counted as failing.";

struct Runner<'a> {
    problem: &'a Problem,
    config: &'a LoopConfig,
    ctx: &'a AgentContext<'a>,
    checker: &'a dyn Checker,
    suite_ids: FailingSet,
    attempts: Vec<Attempt>,
}

enum Step {
    Done,
    Continue,
}

impl<'a> Runner<'a> {
    fn llm_err(&self, source: LlmError) -> RunError {
        RunError::Llm {
            problem_id: self.problem.id.clone(),
            source,
        }
    }

    /// Converts an agent failure into a halting attempt or an aborting error.
    fn agent_failure(
        &mut self,
        stage: Stage,
        iteration: u32,
        mut exchanges: Vec<AgentExchange>,
        err: AgentError,
    ) -> Result<Step, RunError> {
        let message = err.to_string();
        match err {
            AgentError::EmptyCompletion(ex) => exchanges.push(*ex),
            AgentError::Llm(e) if e.is_agent_fault() => {}
            AgentError::Llm(e) => return Err(self.llm_err(e)),
            AgentError::Precondition(p) => unreachable!("loop violated agent precondition: {p}"),
        }
        self.attempts.push(Attempt {
            stage,
            iteration,
            source: None,
            report: None,
            failing_set: self.suite_ids.clone(),
            exchanges,
            agent_error: Some(message),
        });
        Ok(Step::Done)
    }

    /// Verifies the coder's output (if any) and records the attempt.
    fn record(
        &mut self,
        stage: Stage,
        iteration: u32,
        exchanges: Vec<AgentExchange>,
    ) -> Result<&Attempt, RunError> {
        let coder = exchanges.last().expect("coder exchange present");
        let source = coder.code().map(str::to_string);
        let report = match &source {
            Some(code) => Some(
                self.checker
                    .check(code, self.problem, &self.problem.public_tests)
                    .map_err(|source| RunError::Verify {
                        problem_id: self.problem.id.clone(),
                        source,
                    })?,
            ),
            None => None,
        };
        let failing_set = report
            .as_ref()
            .map(|r| r.failing_set.clone())
            .unwrap_or_else(|| self.suite_ids.clone());
        self.attempts.push(Attempt {
            stage,
            iteration,
            source,
            report,
            failing_set,
            exchanges,
            agent_error: None,
        });
        Ok(self.attempts.last().unwrap())
    }

    fn generation_stage(&mut self, stage: Stage, include_tests: bool) -> Result<Step, RunError> {
        match agents::generate_code(self.ctx, self.problem, include_tests, None, None) {
            Ok(ex) => {
                let passed = self.record(stage, 0, vec![ex])?.passed();
                Ok(if passed { Step::Done } else { Step::Continue })
            }
            Err(e) => self.agent_failure(stage, 0, Vec::new(), e),
        }
    }

    /// Feedback text and the code the analyzer should inspect, taken from the
    /// most recent attempt.
    fn last_failure(&self) -> (String, String) {
        let last = self.attempts.last().expect("an earlier attempt exists");
        match (&last.report, &last.source) {
            (Some(report), Some(source)) => (
                format_feedback(report, self.config.feedback_budget)
                    .expect("failed report has failures"),
                source.clone(),
            ),
            _ => {
                // no code: show the analyzer what the model said instead
                let raw = last
                    .exchanges
                    .last()
                    .map(|e| e.completion.result.text.clone())
                    .unwrap_or_default();
                (NO_CODE_FEEDBACK.to_string(), raw)
            }
        }
    }

    fn remediation_stage(&mut self) -> Result<(), RunError> {
        let mut history: Vec<FailingSet> = Vec::new();
        for iteration in 1..=self.config.max_iterations {
            let (feedback, source) = self.last_failure();
            let prior_code = if iteration == 1 && !self.config.carry_stage_b_code {
                String::new()
            } else {
                source.clone()
            };
            let mut exchanges = Vec::new();

            let analysis =
                match agents::analyze_failures(self.ctx, self.problem, &feedback, &source) {
                    Ok(ex) => ex,
                    Err(e) => {
                        self.agent_failure(Stage::Remediation, iteration, exchanges, e)?;
                        return Ok(());
                    }
                };
            let analysis_text = match &analysis.parsed {
                Parsed::Analysis(t) => t.clone(),
                _ => unreachable!("analyzer yields analysis"),
            };
            exchanges.push(analysis);

            let advice = match agents::propose_remediation(self.ctx, &analysis_text, &source) {
                Ok(ex) => ex,
                Err(e) => {
                    self.agent_failure(Stage::Remediation, iteration, exchanges, e)?;
                    return Ok(());
                }
            };
            let advice_text = match &advice.parsed {
                Parsed::Advice(t) => t.clone(),
                _ => unreachable!("remediation yields advice"),
            };
            exchanges.push(advice);

            match agents::generate_code(
                self.ctx,
                self.problem,
                true,
                Some(&advice_text),
                Some(&prior_code),
            ) {
                Ok(ex) => exchanges.push(ex),
                Err(e) => {
                    self.agent_failure(Stage::Remediation, iteration, exchanges, e)?;
                    return Ok(());
                }
            }
            let attempt = self.record(Stage::Remediation, iteration, exchanges)?;
            if attempt.passed() {
                return Ok(());
            }
            history.push(attempt.failing_set.clone());
            if should_stop(&history, self.config) != StopDecision::Continue {
                return Ok(());
            }
        }
        Ok(())
    }

    fn run(&mut self) -> Result<(), RunError> {
        let stages = self.config.stages;
        if stages.prompt_only {
            if let Step::Done = self.generation_stage(Stage::PromptOnly, false)? {
                return Ok(());
            }
        }
        if stages.with_tests {
            if let Step::Done = self.generation_stage(Stage::WithTests, true)? {
                return Ok(());
            }
        }
        if stages.remediation {
            self.remediation_stage()?;
        }
        Ok(())
    }
}

/// Runs the whole escalation pipeline for one problem.
pub fn run_problem(
    problem: &Problem,
    config: &LoopConfig,
    ctx: &AgentContext<'_>,
    checker: &dyn Checker,
) -> Result<RunTranscript, RunError> {
    config.validate().map_err(RunError::Config)?;
    let mut runner = Runner {
        problem,
        config,
        ctx,
        checker,
        suite_ids: problem.public_tests.iter().map(|t| t.id.clone()).collect(),
        attempts: Vec::new(),
    };
    runner.run()?;
    let attempts = runner.attempts;
    let outcome = classify_outcome(&attempts, config);
    Ok(RunTranscript {
        problem_id: problem.id.clone(),
        attempts,
        outcome,
        config: config.clone(),
        agent_settings: ctx.settings.clone(),
        template_set: ctx.templates.id().to_string(),
        backend_id: ctx.engine.backend_id(),
    })
}
