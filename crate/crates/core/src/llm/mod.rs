//! Completion requests, canonical digests and the engine that serves them
//! from a live provider or a replay store.

mod backend;
mod engine;
mod openai;
mod store;

pub use backend::{Backend, BackendError, ScriptedBackend};
pub use engine::{Completion, Engine, EngineMode, LlmError, RetryPolicy};
pub use openai::{OpenAiCompatible, DEFAULT_BASE_URL, DEFAULT_KEY_VAR};
pub use store::{ReplayStore, StoreEntry};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const DEFAULT_SEED: i64 = 1106;
pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub seed: i64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    /// A request with the default sampling parameters (temperature 0, seed 1106).
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            temperature: DEFAULT_TEMPERATURE,
            seed: DEFAULT_SEED,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self.messages.first() {
            None => return Err("request has no messages".into()),
            Some(m) if m.role == Role::Assistant => {
                return Err("first message must be system or user".into())
            }
            _ => {}
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!("invalid temperature {}", self.temperature));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        Ok(())
    }

    /// Concatenated user-visible text, handy for assertions.
    pub fn all_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub backend_id: String,
    pub elapsed_ms: u64,
}

impl CompletionResult {
    pub fn stop(text: impl Into<String>, backend_id: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            finish_reason: FinishReason::Stop,
            usage: Usage::default(),
            backend_id: backend_id.into(),
            elapsed_ms: 0,
        }
    }

    /// Empty text is only legal alongside an error finish.
    pub fn is_well_formed(&self) -> bool {
        !self.text.is_empty() || self.finish_reason == FinishReason::Error
    }
}

/// Serializes a JSON value with object keys sorted and no insignificant
/// whitespace, independent of how the value was parsed.
pub fn canonical_json(value: &Value) -> String {
    fn write(v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push(':');
                    write(&map[k], out);
                }
                out.push('}');
            }
            Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write(item, out);
                }
                out.push(']');
            }
            scalar => out.push_str(&scalar.to_string()),
        }
    }
    let mut out = String::new();
    write(value, &mut out);
    out
}

/// Hex SHA-256 over the canonical JSON form of the request.
pub fn canonical_digest(request: &CompletionRequest) -> String {
    let value = serde_json::to_value(request).expect("request serializes");
    let mut hasher = Sha256::new();
    hasher.update(b"completion-request/v1\n");
    hasher.update(canonical_json(&value).as_bytes());
    hex::encode(hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> CompletionRequest {
        CompletionRequest::new(
            "gpt-4-1106-preview",
            vec![
                Message::new(Role::System, "You write code."),
                Message::new(Role::User, "Add two numbers."),
            ],
        )
    }

    #[test]
    fn defaults_use_fixed_seed() {
        let r = request();
        assert_eq!(r.seed, 1106);
        assert_eq!(r.temperature, 0.0);
        assert!(r.validate().is_ok());
    }

    #[test]
    fn digest_ignores_key_order_and_whitespace() {
        let a = r#"{"model_id":"m","messages":[{"role":"user","content":"hi"}],"temperature":0.0,"seed":1106,"max_tokens":64}"#;
        let b = r#"{ "max_tokens": 64, "seed": 1106,
                    "temperature": 0.0,
                    "messages": [ {"content": "hi", "role": "user"} ], "model_id": "m" }"#;
        let ra: CompletionRequest = serde_json::from_str(a).unwrap();
        let rb: CompletionRequest = serde_json::from_str(b).unwrap();
        assert_eq!(canonical_digest(&ra), canonical_digest(&rb));
    }

    #[test]
    fn digest_covers_every_field() {
        let base = request();
        let d = canonical_digest(&base);
        assert_eq!(d, canonical_digest(&base.clone()));
        assert_eq!(d.len(), 64);

        let mut t = base.clone();
        t.temperature = 0.1;
        assert_ne!(canonical_digest(&t), d);
        let mut m = base.clone();
        m.model_id = "gpt-3.5-turbo-1106".into();
        assert_ne!(canonical_digest(&m), d);
        let mut s = base.clone();
        s.seed = 1107;
        assert_ne!(canonical_digest(&s), d);
    }

    #[test]
    fn canonical_json_sorts_nested_keys() {
        let v: Value =
            serde_json::from_str(r#"{"b":{"z":1,"a":[{"y":2,"x":1}]},"a":"\n"}"#).unwrap();
        assert_eq!(
            canonical_json(&v),
            r#"{"a":"\n","b":{"a":[{"x":1,"y":2}],"z":1}}"#
        );
    }

    #[test]
    fn request_validation() {
        let mut r = request();
        r.messages.clear();
        assert!(r.validate().is_err());
        let mut r = request();
        r.messages[0].role = Role::Assistant;
        assert!(r.validate().is_err());
        let mut r = request();
        r.temperature = -0.5;
        assert!(r.validate().is_err());
    }

    #[test]
    fn empty_text_requires_error_finish() {
        let mut r = CompletionResult::stop("", "b");
        assert!(!r.is_well_formed());
        r.finish_reason = FinishReason::Error;
        assert!(r.is_well_formed());
    }
}
