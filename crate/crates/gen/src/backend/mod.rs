//! Asynchronous-job contract for text-to-image services.
//!
//! `submit` starts one generation and returns an opaque handle; `poll` is
//! idempotent and reports progress for that handle. A `Ready` result carries
//! the PNG bytes of one composite image.

mod http;
mod mock;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpBackend;
pub use mock::{mock_composite, MockBackend, MockConfig};

/// Opaque backend job reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobHandle(pub String);

impl JobHandle {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for JobHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PollStatus {
    Pending,
    Ready(Vec<u8>),
    /// The service gave up on this generation.
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    /// Network or server-side hiccup; worth trying again.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unknown job handle `{0}`")]
    UnknownHandle(String),
    /// The service answered with something outside the contract.
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

#[async_trait]
pub trait Backend: Send + Sync {
    async fn submit(&self, prompt_id: u64, prompt: &str) -> Result<JobHandle, BackendError>;

    async fn poll(&self, handle: &JobHandle) -> Result<PollStatus, BackendError>;
}
