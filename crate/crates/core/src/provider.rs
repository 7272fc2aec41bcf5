//! Pluggable text-completion backends.

use std::collections::VecDeque;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::AnchorContext;

pub const ENDPOINT_ENV: &str = "CODETATIONS_PROVIDER_ENDPOINT";
pub const KEY_ENV: &str = "CODETATIONS_PROVIDER_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompletionRequest {
    pub instructions: String,
    pub document: String,
    pub anchor_context: AnchorContext,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider unavailable")]
    Unavailable,
    #[error("provider transport failure: {0}")]
    Transport(String),
    #[error("provider returned an unusable reply: {0}")]
    BadReply(String),
}

/// A text completion backend. Implementations must not touch engine state.
pub trait CompletionProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;

    fn name(&self) -> &str {
        "provider"
    }
}

type Responder = dyn Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync;

/// Deterministic provider for tests and offline use.
pub struct MockProvider {
    responder: Box<Responder>,
    log: Mutex<Vec<CompletionRequest>>,
}

impl MockProvider {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        MockProvider {
            responder: Box::new(f),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Always replies with `reply`.
    pub fn constant(reply: impl Into<String>) -> Self {
        let reply = reply.into();
        Self::from_fn(move |_| Ok(reply.clone()))
    }

    /// Replies with each scripted entry in turn, then reports unavailable.
    pub fn scripted<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queue: Mutex<VecDeque<String>> =
            Mutex::new(replies.into_iter().map(Into::into).collect());
        Self::from_fn(move |_| {
            queue
                .lock()
                .unwrap()
                .pop_front()
                .ok_or(ProviderError::Unavailable)
        })
    }

    /// Echoes the cached anchor text back; the `--provider mock` behavior.
    pub fn echo() -> Self {
        Self::from_fn(|req| {
            if req.instructions.starts_with(crate::lmtest::INSTRUCTIONS_HEAD) {
                Ok("YES".to_string())
            } else {
                Ok(req.anchor_context.anchor_text.clone())
            }
        })
    }

    /// Requests seen so far.
    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.log.lock().unwrap().clone()
    }
}

impl CompletionProvider for MockProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.log.lock().unwrap().push(request.clone());
        (self.responder)(request)
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// Posts the request as JSON to an HTTP endpoint.
///
/// The endpoint answers with `{"text": "..."}` or a plain-text body.
pub struct HttpProvider {
    endpoint: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>, key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(120)))
            .build()
            .into();
        HttpProvider {
            endpoint: endpoint.into(),
            key,
            agent,
        }
    }

    /// Reads endpoint and key from the environment.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty())?;
        Some(Self::new(endpoint, std::env::var(KEY_ENV).ok()))
    }
}

#[derive(Deserialize)]
struct TextReply {
    text: String,
}

impl CompletionProvider for HttpProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(request)
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        match serde_json::from_str::<TextReply>(&body) {
            Ok(reply) => Ok(reply.text),
            Err(_) if !body.trim_start().starts_with('{') => Ok(body),
            Err(e) => Err(ProviderError::BadReply(e.to_string())),
        }
    }

    fn name(&self) -> &str {
        "http"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> CompletionRequest {
        CompletionRequest {
            instructions: "find it".into(),
            document: "doc".into(),
            anchor_context: AnchorContext {
                anchor_text: "anchor".into(),
                ..Default::default()
            },
        }
    }

    #[test]
    fn scripted_runs_out() {
        let p = MockProvider::scripted(["a", "b"]);
        assert_eq!(p.complete(&req()).unwrap(), "a");
        assert_eq!(p.complete(&req()).unwrap(), "b");
        assert_eq!(p.complete(&req()), Err(ProviderError::Unavailable));
        assert_eq!(p.requests().len(), 3);
    }

    #[test]
    fn echo_returns_anchor_text() {
        assert_eq!(MockProvider::echo().complete(&req()).unwrap(), "anchor");
    }

    #[test]
    fn http_transport_failure_is_an_error() {
        let p = HttpProvider::new("http://127.0.0.1:1/none", None);
        assert!(matches!(p.complete(&req()), Err(ProviderError::Transport(_))));
    }
}
