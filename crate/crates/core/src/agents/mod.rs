//! The coder, analyzer and remediation agents: prompt construction, one
//! completion call each, and parsing of the reply.

mod extract;
mod template;

pub use extract::{extract_code, BlockChoice, Extraction, ExtractionError, DEFAULT_STARTERS};
pub use template::{AgentRole, Slots, TemplateError, TemplateSet, DEFAULT_SET, TEMPLATE_NAMES};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::llm::{
    Completion, CompletionRequest, Engine, LlmError, DEFAULT_MAX_TOKENS, DEFAULT_SEED,
    DEFAULT_TEMPERATURE,
};
use crate::problem::{Problem, ProblemMode, TestCase, TestPayload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Coder,
    Analyzer,
    Remediation,
}

impl From<AgentKind> for AgentRole {
    fn from(k: AgentKind) -> Self {
        match k {
            AgentKind::Coder => AgentRole::Coder,
            AgentKind::Analyzer => AgentRole::Analyzer,
            AgentKind::Remediation => AgentRole::Remediation,
        }
    }
}

/// Model and sampling settings shared by all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub model_id: String,
    pub temperature: f64,
    pub seed: i64,
    pub max_tokens: u32,
    pub extraction: Extraction,
    /// Whether the analyzer also sees the problem statement.
    pub analyzer_sees_prompt: bool,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            model_id: "gpt-4-1106-preview".into(),
            temperature: DEFAULT_TEMPERATURE,
            seed: DEFAULT_SEED,
            max_tokens: DEFAULT_MAX_TOKENS,
            extraction: Extraction::default(),
            analyzer_sees_prompt: true,
        }
    }
}

/// What an agent call produced after parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Parsed {
    Code(String),
    Advice(String),
    Analysis(String),
    /// The coder replied but no code could be extracted.
    NoCode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentExchange {
    pub agent: AgentKind,
    pub template_id: String,
    pub completion: Completion,
    pub parsed: Parsed,
}

impl AgentExchange {
    pub fn code(&self) -> Option<&str> {
        match &self.parsed {
            Parsed::Code(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
    /// The model returned nothing usable. Carries the exchange for the transcript.
    #[error("{:?} agent returned an empty completion", .0.agent)]
    EmptyCompletion(Box<AgentExchange>),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Everything an agent needs to make a call.
pub struct AgentContext<'a> {
    pub engine: &'a Engine,
    pub templates: &'a TemplateSet,
    pub settings: &'a AgentSettings,
}

/// Renders a JSON value as a Python literal.
pub fn python_literal(value: &Value) -> String {
    match value {
        Value::Null => "None".into(),
        Value::Bool(true) => "True".into(),
        Value::Bool(false) => "False".into(),
        Value::Number(n) => n.to_string(),
        Value::String(s) => Value::String(s.clone()).to_string(),
        Value::Array(items) => format!(
            "[{}]",
            items
                .iter()
                .map(python_literal)
                .collect::<Vec<_>>()
                .join(", ")
        ),
        Value::Object(map) => format!(
            "{{{}}}",
            map.iter()
                .map(|(k, v)| format!("{}: {}", Value::String(k.clone()), python_literal(v)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

/// Function name from a signature such as `def add(a, b):`.
pub fn function_name(entrypoint: &str) -> &str {
    let rest = entrypoint.trim_start();
    let rest = rest.strip_prefix("async ").unwrap_or(rest).trim_start();
    let rest = rest.strip_prefix("def ").unwrap_or(rest).trim_start();
    let end = rest
        .find(|c: char| !(c.is_alphanumeric() || c == '_'))
        .unwrap_or(rest.len());
    &rest[..end]
}

/// Public tests as text for the coder: Python asserts for function tests,
/// input/expected-output blocks for stdio tests.
pub fn render_tests(problem: &Problem, tests: &[TestCase]) -> String {
    let name = problem
        .entrypoint
        .as_deref()
        .map(function_name)
        .unwrap_or("solution");
    let mut out = Vec::new();
    for t in tests {
        match &t.payload {
            TestPayload::FunctionCall { args, expected } => {
                let args = args
                    .iter()
                    .map(python_literal)
                    .collect::<Vec<_>>()
                    .join(", ");
                out.push(format!(
                    "assert {name}({args}) == {}  # {}",
                    python_literal(expected),
                    t.id
                ));
            }
            TestPayload::Stdio { stdin, expected } => {
                out.push(format!(
                    "Test {}\nInput:\n```\n{}\n```\nExpected output:\n```\n{}\n```",
                    t.id,
                    stdin.trim_end_matches('\n'),
                    expected.trim_end_matches('\n')
                ));
            }
        }
    }
    match problem.mode {
        ProblemMode::FunctionLevel => format!("```python\n{}\n```", out.join("\n")),
        ProblemMode::FullProgram => out.join("\n\n"),
    }
}

fn request(ctx: &AgentContext<'_>, kind: AgentKind, slots: &Slots<'_>) -> CompletionRequest {
    let s = ctx.settings;
    CompletionRequest {
        model_id: s.model_id.clone(),
        messages: ctx.templates.messages(kind.into(), slots),
        temperature: s.temperature,
        seed: s.seed,
        max_tokens: s.max_tokens,
    }
}

/// Builds the coder request. Public tests are included only when asked;
/// advice and prior code appear only in remediation rounds.
pub fn build_coder_prompt(
    ctx: &AgentContext<'_>,
    problem: &Problem,
    include_tests: bool,
    advice: Option<&str>,
    prior_code: Option<&str>,
) -> Result<CompletionRequest, AgentError> {
    if advice.is_some() && prior_code.is_none() {
        return Err(AgentError::Precondition("advice requires prior code"));
    }
    let tests = include_tests.then(|| render_tests(problem, &problem.public_tests));
    let slots = Slots {
        prompt: Some(&problem.prompt),
        entrypoint: problem.entrypoint.as_deref(),
        tests: tests.as_deref(),
        advice,
        prior_code: advice.and(prior_code),
        ..Default::default()
    };
    Ok(request(ctx, AgentKind::Coder, &slots))
}

fn call(
    ctx: &AgentContext<'_>,
    kind: AgentKind,
    req: CompletionRequest,
) -> Result<Completion, AgentError> {
    let completion = ctx.engine.complete(&req)?;
    log::debug!("{kind:?} completion {}", &completion.digest[..12]);
    Ok(completion)
}

/// One coder call followed by code extraction. A reply without code is not
/// an error here; the loop counts it as a failed attempt.
pub fn generate_code(
    ctx: &AgentContext<'_>,
    problem: &Problem,
    include_tests: bool,
    advice: Option<&str>,
    prior_code: Option<&str>,
) -> Result<AgentExchange, AgentError> {
    let req = build_coder_prompt(ctx, problem, include_tests, advice, prior_code)?;
    let completion = call(ctx, AgentKind::Coder, req)?;
    let parsed = match ctx.settings.extraction.extract(&completion.result.text) {
        Ok(code) => Parsed::Code(code),
        Err(ExtractionError) => Parsed::NoCode,
    };
    Ok(AgentExchange {
        agent: AgentKind::Coder,
        template_id: ctx.templates.template_id(AgentRole::Coder),
        completion,
        parsed,
    })
}

fn text_exchange(
    ctx: &AgentContext<'_>,
    kind: AgentKind,
    req: CompletionRequest,
    wrap: fn(String) -> Parsed,
) -> Result<AgentExchange, AgentError> {
    let completion = call(ctx, kind, req)?;
    let text = completion.result.text.trim().to_string();
    let empty = text.is_empty();
    let exchange = AgentExchange {
        agent: kind,
        template_id: ctx.templates.template_id(kind.into()),
        completion,
        parsed: wrap(text),
    };
    if empty {
        return Err(AgentError::EmptyCompletion(Box::new(exchange)));
    }
    Ok(exchange)
}

/// Asks the model why the code fails the reported tests.
pub fn analyze_failures(
    ctx: &AgentContext<'_>,
    problem: &Problem,
    feedback: &str,
    source: &str,
) -> Result<AgentExchange, AgentError> {
    if feedback.trim().is_empty() {
        return Err(AgentError::Precondition("analysis needs failure feedback"));
    }
    let slots = Slots {
        prompt: ctx
            .settings
            .analyzer_sees_prompt
            .then_some(problem.prompt.as_str()),
        feedback: Some(feedback),
        prior_code: Some(source),
        ..Default::default()
    };
    let req = request(ctx, AgentKind::Analyzer, &slots);
    text_exchange(ctx, AgentKind::Analyzer, req, Parsed::Analysis)
}

/// Turns an analysis into fixing advice for the next coder round.
pub fn propose_remediation(
    ctx: &AgentContext<'_>,
    analysis: &str,
    source: &str,
) -> Result<AgentExchange, AgentError> {
    if analysis.trim().is_empty() {
        return Err(AgentError::Precondition("remediation needs an analysis"));
    }
    let slots = Slots {
        analysis: Some(analysis),
        prior_code: Some(source),
        ..Default::default()
    };
    let req = request(ctx, AgentKind::Remediation, &slots);
    text_exchange(ctx, AgentKind::Remediation, req, Parsed::Advice)
}
