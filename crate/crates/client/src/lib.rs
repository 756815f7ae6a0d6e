//! Thin async client for the gateway HTTP API.

use std::time::{Duration, Instant};

use itsgw_core::api::{ErrorBody, FuseRequest, FuseResponse, HealthResponse, SubmitRequest, SubmitResponse};
use itsgw_core::model::{JobEnvelope, MetricsReport};
use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("gateway answered {status}: {} ({})", body.message, body.code)]
    Api { status: u16, body: ErrorBody },
    #[error("job {0} did not finish in time")]
    Timeout(String),
}

impl ClientError {
    /// Error code from the gateway, if it sent one.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.code),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct GatewayClient {
    http: reqwest::Client,
    base: String,
}

impl GatewayClient {
    /// `base_url` like `http://127.0.0.1:8080`; a missing scheme means http.
    pub fn new(base_url: &str) -> Self {
        let base = base_url.trim_end_matches('/');
        let base = if base.contains("://") {
            base.to_string()
        } else {
            format!("http://{base}")
        };
        Self {
            http: reqwest::Client::new(),
            base,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let bytes = resp.bytes().await?;
        let body = serde_json::from_slice(&bytes).unwrap_or_else(|_| ErrorBody {
            code: "Http".into(),
            message: String::from_utf8_lossy(&bytes).into_owned(),
        });
        Err(ClientError::Api {
            status: status.as_u16(),
            body,
        })
    }

    pub async fn submit(&self, req: &SubmitRequest) -> Result<String> {
        let resp = self
            .http
            .post(format!("{}/v1/jobs", self.base))
            .json(req)
            .send()
            .await?;
        Ok(Self::decode::<SubmitResponse>(resp).await?.job_id)
    }

    pub async fn job(&self, job_id: &str) -> Result<JobEnvelope> {
        Self::decode(self.http.get(format!("{}/v1/jobs/{job_id}", self.base)).send().await?).await
    }

    /// Polls until the job is terminal.
    pub async fn wait(&self, job_id: &str, every: Duration, timeout: Duration) -> Result<JobEnvelope> {
        let deadline = Instant::now() + timeout;
        loop {
            let env = self.job(job_id).await?;
            if env.status.is_terminal() {
                return Ok(env);
            }
            if Instant::now() >= deadline {
                return Err(ClientError::Timeout(job_id.to_string()));
            }
            tokio::time::sleep(every).await;
        }
    }

    pub async fn metrics(&self) -> Result<MetricsReport> {
        Self::decode(self.http.get(format!("{}/v1/metrics", self.base)).send().await?).await
    }

    pub async fn health(&self) -> Result<HealthResponse> {
        Self::decode(self.http.get(format!("{}/v1/healthz", self.base)).send().await?).await
    }

    pub async fn fuse(&self, req: &FuseRequest) -> Result<FuseResponse> {
        Self::decode(
            self.http
                .post(format!("{}/v1/fuse", self.base))
                .json(req)
                .send()
                .await?,
        )
        .await
    }
}
