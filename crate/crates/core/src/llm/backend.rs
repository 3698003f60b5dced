use super::{CompletionRequest, CompletionResult};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Network or provider hiccup; worth retrying.
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("context window exceeded: {0}")]
    ContextOverflow(String),
    #[error("request rejected: {0}")]
    Rejected(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

/// A source of completions. Implementations must be callable from several
/// problem workers at once.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn send(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError>;
}

type Script = dyn Fn(&CompletionRequest) -> Result<CompletionResult, BackendError> + Send + Sync;

/// Answers requests with a caller-supplied function. Used to author replay
/// fixtures and to drive the pipeline in tests.
pub struct ScriptedBackend {
    id: String,
    script: Box<Script>,
}

impl ScriptedBackend {
    pub fn new<F>(id: impl Into<String>, script: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<CompletionResult, BackendError> + Send + Sync + 'static,
    {
        Self {
            id: id.into(),
            script: Box::new(script),
        }
    }

    /// Convenience form: the script returns plain text, wrapped as a `stop` result.
    pub fn from_text<F>(id: impl Into<String>, script: F) -> Self
    where
        F: Fn(&CompletionRequest) -> String + Send + Sync + 'static,
    {
        let id = id.into();
        let backend_id = id.clone();
        Self::new(id, move |req| {
            Ok(CompletionResult::stop(script(req), backend_id.clone()))
        })
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (self.script)(request)
    }
}
