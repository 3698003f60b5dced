//! Adapter for providers speaking the OpenAI chat-completions wire format.

use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendError, CompletionRequest, CompletionResult, FinishReason, Usage};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_KEY_VAR: &str = "PROVIDER_API_KEY";

pub struct OpenAiCompatible {
    id: String,
    base_url: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl OpenAiCompatible {
    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
    ) -> Result<Self, BackendError> {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| BackendError::Rejected(format!("http client: {e}")))?;
        Ok(Self {
            id: format!("openai-compatible:{base_url}"),
            base_url,
            api_key: api_key.into(),
            client,
        })
    }

    /// Reads the API key from the named environment variable.
    pub fn from_env(base_url: impl Into<String>, key_var: &str) -> Result<Self, BackendError> {
        let key = std::env::var(key_var).map_err(|_| {
            BackendError::Rejected(format!("environment variable {key_var} is not set"))
        })?;
        Self::new(base_url, key)
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

fn body(request: &CompletionRequest) -> serde_json::Value {
    json!({
        "model": request.model_id,
        "messages": request.messages,
        "temperature": request.temperature,
        "seed": request.seed,
        "max_tokens": request.max_tokens,
    })
}

fn classify_status(status: u16, text: String) -> BackendError {
    match status {
        408 | 409 | 429 | 500..=599 => BackendError::Transport(format!("HTTP {status}: {text}")),
        _ if text.contains("context_length_exceeded") => BackendError::ContextOverflow(text),
        _ => BackendError::Rejected(format!("HTTP {status}: {text}")),
    }
}

fn parse_finish(reason: Option<&str>) -> FinishReason {
    match reason {
        Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        _ => FinishReason::Error,
    }
}

impl Backend for OpenAiCompatible {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let started = Instant::now();
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&body(request))
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(classify_status(status, text));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::Transport(format!("bad response body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Transport("response has no choices".into()))?;
        let text = choice.message.content.unwrap_or_default();
        let mut finish_reason = parse_finish(choice.finish_reason.as_deref());
        if text.is_empty() {
            finish_reason = FinishReason::Error;
        }
        Ok(CompletionResult {
            text,
            finish_reason,
            usage: parsed
                .usage
                .map(|u| Usage {
                    prompt_tokens: u.prompt_tokens,
                    completion_tokens: u.completion_tokens,
                })
                .unwrap_or_default(),
            backend_id: self.id.clone(),
            elapsed_ms: started.elapsed().as_millis() as u64,
        })
    }
}
