use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    canonical_digest, Backend, BackendError, CompletionRequest, CompletionResult, ReplayStore,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineMode {
    /// Serve from the store when possible, otherwise call the backend and persist.
    Record,
    /// Serve only from the store. The backend is never contacted.
    Replay,
    /// Always call the backend; nothing is stored.
    Passthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        Self {
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    /// Delay before retry number `retry` (0-based): base * 2^retry, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("replay store has no completion for digest {digest}")]
    ReplayMiss { digest: String },
    #[error("transport failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("context window exceeded: {0}")]
    ContextOverflow(String),
    #[error("request rejected by provider: {0}")]
    Rejected(String),
    #[error("engine has no backend configured for {0:?} mode")]
    NoBackend(EngineMode),
    #[error("replay store i/o: {0}")]
    Store(#[from] std::io::Error),
}

impl LlmError {
    /// Errors that say something about the request or model rather than the
    /// harness. The loop treats these as agent failures; everything else
    /// aborts the run.
    pub fn is_agent_fault(&self) -> bool {
        matches!(self, LlmError::ContextOverflow(_) | LlmError::Rejected(_))
    }
}

/// A request paired with its digest and the result that answered it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub digest: String,
    pub request: CompletionRequest,
    pub result: CompletionResult,
}

pub struct Engine {
    mode: EngineMode,
    backend: Option<Arc<dyn Backend>>,
    store: Option<Arc<ReplayStore>>,
    retry: RetryPolicy,
}

impl Engine {
    pub fn replay(store: Arc<ReplayStore>) -> Self {
        Self {
            mode: EngineMode::Replay,
            backend: None,
            store: Some(store),
            retry: RetryPolicy::default(),
        }
    }

    pub fn record(backend: Arc<dyn Backend>, store: Arc<ReplayStore>) -> Self {
        Self {
            mode: EngineMode::Record,
            backend: Some(backend),
            store: Some(store),
            retry: RetryPolicy::default(),
        }
    }

    pub fn passthrough(backend: Arc<dyn Backend>) -> Self {
        Self {
            mode: EngineMode::Passthrough,
            backend: Some(backend),
            store: None,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn mode(&self) -> EngineMode {
        self.mode
    }

    /// Identifier recorded in transcripts. Stable for a given configuration.
    pub fn backend_id(&self) -> String {
        match (self.mode, &self.backend) {
            (EngineMode::Replay, _) | (_, None) => "replay".to_string(),
            (EngineMode::Record, Some(b)) => format!("record:{}", b.id()),
            (EngineMode::Passthrough, Some(b)) => b.id().to_string(),
        }
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
        request.validate().map_err(LlmError::InvalidRequest)?;
        let digest = canonical_digest(request);

        if matches!(self.mode, EngineMode::Replay | EngineMode::Record) {
            if let Some(hit) = self.store.as_ref().and_then(|s| s.get(&digest)) {
                return Ok(Completion {
                    digest,
                    request: request.clone(),
                    result: hit,
                });
            }
            if self.mode == EngineMode::Replay {
                return Err(LlmError::ReplayMiss { digest });
            }
        }

        let backend = self
            .backend
            .as_ref()
            .ok_or(LlmError::NoBackend(self.mode))?;
        let result = self.send_with_retry(backend.as_ref(), request)?;
        if self.mode == EngineMode::Record {
            if let Some(store) = &self.store {
                store.insert(&digest, &result)?;
            }
        }
        Ok(Completion {
            digest,
            request: request.clone(),
            result,
        })
    }

    fn send_with_retry(
        &self,
        backend: &dyn Backend,
        request: &CompletionRequest,
    ) -> Result<CompletionResult, LlmError> {
        let mut retry = 0;
        loop {
            match backend.send(request) {
                Ok(result) => return Ok(result),
                Err(BackendError::Transport(message)) => {
                    if retry >= self.retry.max_retries {
                        return Err(LlmError::Transport {
                            attempts: retry + 1,
                            message,
                        });
                    }
                    log::warn!("backend {}: {message}; retrying", backend.id());
                    std::thread::sleep(self.retry.delay(retry));
                    retry += 1;
                }
                Err(BackendError::ContextOverflow(m)) => return Err(LlmError::ContextOverflow(m)),
                Err(BackendError::Rejected(m)) => return Err(LlmError::Rejected(m)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{Message, Role, ScriptedBackend};
    use std::sync::atomic::{AtomicU32, Ordering};

    fn request(text: &str) -> CompletionRequest {
        CompletionRequest::new("m", vec![Message::new(Role::User, text)])
    }

    fn counting_backend(calls: Arc<AtomicU32>) -> Arc<dyn Backend> {
        Arc::new(ScriptedBackend::from_text("fake", move |req| {
            calls.fetch_add(1, Ordering::SeqCst);
            format!("echo: {}", req.messages[0].content)
        }))
    }

    #[test]
    fn replay_hit_is_byte_identical() {
        let store = Arc::new(ReplayStore::in_memory());
        let req = request("hello");
        let stored = CompletionResult {
            elapsed_ms: 123,
            ..CompletionResult::stop("r1", "recorded")
        };
        store.insert(&canonical_digest(&req), &stored).unwrap();
        let engine = Engine::replay(store);
        let got = engine.complete(&req).unwrap();
        assert_eq!(got.result, stored);
        assert_eq!(
            serde_json::to_string(&got.result).unwrap(),
            serde_json::to_string(&stored).unwrap()
        );
    }

    #[test]
    fn replay_miss_names_digest() {
        let engine = Engine::replay(Arc::new(ReplayStore::in_memory()));
        let req = request("missing");
        let err = engine.complete(&req).unwrap_err();
        assert!(err.to_string().contains(&canonical_digest(&req)));
        assert!(!err.is_agent_fault());
    }

    #[test]
    fn record_serves_repeat_from_store() {
        let calls = Arc::new(AtomicU32::new(0));
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(ReplayStore::open(dir.path().join("s.jsonl")).unwrap());
        let engine = Engine::record(counting_backend(calls.clone()), store.clone());
        let a = engine.complete(&request("x")).unwrap();
        let b = engine.complete(&request("x")).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(a, b);
        assert_eq!(store.len(), 1);
        // persisted before returning
        let reopened = ReplayStore::open(dir.path().join("s.jsonl")).unwrap();
        assert_eq!(reopened.get(&a.digest), Some(a.result));
    }

    #[test]
    fn transient_failures_are_retried_at_most_three_times() {
        let calls = Arc::new(AtomicU32::new(0));
        let c = calls.clone();
        let backend = Arc::new(ScriptedBackend::new("flaky", move |_| {
            c.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::Transport("503".into()))
        }));
        let engine = Engine::passthrough(backend).with_retry(RetryPolicy::no_delay());
        let err = engine.complete(&request("x")).unwrap_err();
        assert_eq!(calls.load(Ordering::SeqCst), 4);
        assert!(matches!(err, LlmError::Transport { attempts: 4, .. }));
    }

    #[test]
    fn recovers_after_transient_failure() {
        let calls = Arc::new(AtomicU32::new(0));
        let c = calls.clone();
        let backend = Arc::new(ScriptedBackend::new("flaky", move |_| {
            if c.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(BackendError::Transport("reset".into()))
            } else {
                Ok(CompletionResult::stop("ok", "flaky"))
            }
        }));
        let engine = Engine::passthrough(backend).with_retry(RetryPolicy::no_delay());
        assert_eq!(engine.complete(&request("x")).unwrap().result.text, "ok");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn context_overflow_is_not_retried() {
        let calls = Arc::new(AtomicU32::new(0));
        let c = calls.clone();
        let backend = Arc::new(ScriptedBackend::new("small", move |_| {
            c.fetch_add(1, Ordering::SeqCst);
            Err(BackendError::ContextOverflow("too long".into()))
        }));
        let engine = Engine::passthrough(backend).with_retry(RetryPolicy::no_delay());
        let err = engine.complete(&request("x")).unwrap_err();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert!(err.is_agent_fault());
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(0), Duration::from_millis(500));
        assert_eq!(p.delay(1), Duration::from_millis(1000));
        assert_eq!(p.delay(2), Duration::from_millis(2000));
        assert_eq!(p.delay(10), Duration::from_secs(8));
        assert_eq!(p.delay(40), Duration::from_secs(8));
    }

    #[test]
    fn invalid_request_rejected_before_backend() {
        let calls = Arc::new(AtomicU32::new(0));
        let engine = Engine::passthrough(counting_backend(calls.clone()));
        let mut req = request("x");
        req.messages.clear();
        assert!(matches!(
            engine.complete(&req),
            Err(LlmError::InvalidRequest(_))
        ));
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }
}
