use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use reqwest::StatusCode;
use serde::Deserialize;

use super::{Backend, BackendError, JobHandle, PollStatus};

/// Generic HTTP adapter.
///
/// `POST {base}/jobs` with `{"prompt": ...}` answers `202 {"id": ...}`;
/// `GET {base}/jobs/{id}` answers `{"status": "pending" | "ready" | "error"}`
/// with `image_b64` or `message` as appropriate. A bearer token is sent when
/// configured.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
    base_url: String,
    token: Option<String>,
}

#[derive(Deserialize)]
struct Submitted {
    id: String,
}

#[derive(Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum JobStatus {
    Pending,
    Ready { image_b64: String },
    Error { message: String },
}

fn transport(e: reqwest::Error) -> BackendError {
    BackendError::Transport(e.to_string())
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, token: Option<String>) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(Self {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
        })
    }

    fn authorize(&self, req: reqwest::RequestBuilder) -> reqwest::RequestBuilder {
        match &self.token {
            Some(t) => req.bearer_auth(t),
            None => req,
        }
    }

    fn status_error(status: StatusCode, body: String) -> BackendError {
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            BackendError::Transport(format!("HTTP {status}: {body}"))
        } else {
            BackendError::Protocol(format!("HTTP {status}: {body}"))
        }
    }
}

#[async_trait]
impl Backend for HttpBackend {
    async fn submit(&self, _prompt_id: u64, prompt: &str) -> Result<JobHandle, BackendError> {
        let req = self
            .client
            .post(format!("{}/jobs", self.base_url))
            .json(&serde_json::json!({ "prompt": prompt }));
        let resp = self.authorize(req).send().await.map_err(transport)?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(Self::status_error(status, body));
        }
        let body: Submitted = resp
            .json()
            .await
            .map_err(|e| BackendError::Protocol(format!("bad submit response: {e}")))?;
        Ok(JobHandle(body.id))
    }

    async fn poll(&self, handle: &JobHandle) -> Result<PollStatus, BackendError> {
        let req = self.client.get(format!("{}/jobs/{}", self.base_url, handle));
        let resp = self.authorize(req).send().await.map_err(transport)?;
        let status = resp.status();
        if status == StatusCode::NOT_FOUND {
            return Err(BackendError::UnknownHandle(handle.0.clone()));
        }
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(Self::status_error(status, body));
        }
        let body: JobStatus = resp
            .json()
            .await
            .map_err(|e| BackendError::Protocol(format!("bad poll response: {e}")))?;
        Ok(match body {
            JobStatus::Pending => PollStatus::Pending,
            JobStatus::Error { message } => PollStatus::Error(message),
            JobStatus::Ready { image_b64 } => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(image_b64.trim())
                    .map_err(|e| BackendError::Protocol(format!("bad image_b64: {e}")))?;
                PollStatus::Ready(bytes)
            }
        })
    }
}
