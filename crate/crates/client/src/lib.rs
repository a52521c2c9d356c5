//! Async HTTP client for `falldet-server`.

use falldet::wire::{
    CreateSession, ErrorBody, ErrorCode, EvaluateRequest, EvaluateResponse, FramesAccepted, SessionInfo,
    SweepRequest, SweepResponse,
};
use falldet::{ConfusionMatrix, DetectorConfig, MetricsJson};
use reqwest::{Method, RequestBuilder, Response};
use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    /// The server answered with an error body.
    #[error("server error ({status}): {message}")]
    Api { status: u16, code: ErrorCode, message: String },
    #[error("unexpected response ({status}): {body}")]
    Unexpected { status: u16, body: String },
}

impl ClientError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Api { code, .. } => Some(*code),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base_url` is e.g. `http://127.0.0.1:8080`; a trailing slash is ignored.
    pub fn new(base_url: impl Into<String>) -> Self {
        let mut base = base_url.into();
        while base.ends_with('/') {
            base.pop();
        }
        Client {
            base,
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        self.http.request(method, format!("{}{}", self.base, path))
    }

    async fn check(resp: Response) -> Result<Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body = resp.text().await?;
        Err(match serde_json::from_str::<ErrorBody>(&body) {
            Ok(e) => ClientError::Api {
                status: status.as_u16(),
                code: e.code,
                message: e.error,
            },
            Err(_) => ClientError::Unexpected {
                status: status.as_u16(),
                body,
            },
        })
    }

    async fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T> {
        let resp = Self::check(req.send().await?).await?;
        let status = resp.status().as_u16();
        let body = resp.text().await?;
        serde_json::from_str(&body).map_err(|_| ClientError::Unexpected { status, body })
    }

    pub async fn health(&self) -> Result<serde_json::Value> {
        self.send(self.request(Method::GET, "/health")).await
    }

    pub async fn create_session(&self, config: Option<DetectorConfig>) -> Result<SessionInfo> {
        self.send(self.request(Method::POST, "/v1/sessions").json(&CreateSession { config }))
            .await
    }

    pub async fn session(&self, id: &str) -> Result<SessionInfo> {
        self.send(self.request(Method::GET, &format!("/v1/sessions/{id}"))).await
    }

    /// Sends a batch of JSONL frame records. The batch is applied atomically.
    pub async fn push_frames(&self, id: &str, jsonl: impl Into<String>) -> Result<FramesAccepted> {
        let req = self
            .request(Method::POST, &format!("/v1/sessions/{id}/frames"))
            .header("content-type", "application/x-ndjson")
            .body(jsonl.into());
        self.send(req).await
    }

    pub async fn reset_session(&self, id: &str) -> Result<SessionInfo> {
        self.send(self.request(Method::POST, &format!("/v1/sessions/{id}/reset"))).await
    }

    pub async fn delete_session(&self, id: &str) -> Result<()> {
        let resp = self.request(Method::DELETE, &format!("/v1/sessions/{id}")).send().await?;
        Self::check(resp).await.map(drop)
    }

    pub async fn evaluate(&self, req: &EvaluateRequest) -> Result<EvaluateResponse> {
        self.send(self.request(Method::POST, "/v1/evaluate").json(req)).await
    }

    pub async fn sweep(&self, req: &SweepRequest) -> Result<SweepResponse> {
        self.send(self.request(Method::POST, "/v1/sweep").json(req)).await
    }

    pub async fn metrics(&self, m: &ConfusionMatrix) -> Result<MetricsJson> {
        self.send(self.request(Method::POST, "/v1/metrics").json(m)).await
    }
}
