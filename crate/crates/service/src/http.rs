//! HTTP/JSON surface of the gateway.

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use itsgw_core::api::{ErrorBody, FuseRequest, SubmitRequest, SubmitResponse};

use crate::error::ServiceError;
use crate::gateway::Gateway;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::QueueFull { .. } => StatusCode::TOO_MANY_REQUESTS,
            ServiceError::ValidationFailed(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::NotFusable(_) => StatusCode::CONFLICT,
            ServiceError::ShuttingDown => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::Core(_) => StatusCode::BAD_REQUEST,
            ServiceError::CorruptLog { .. } | ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body)
        .map_err(|e| ServiceError::ValidationFailed(itsgw_core::Error::InvalidInput(format!("request body: {e}"))))
}

async fn submit(State(gw): State<Gateway>, body: Bytes) -> Result<(StatusCode, Json<SubmitResponse>), ServiceError> {
    let req: SubmitRequest = parse(&body)?;
    let job_id = gw.submit(req)?;
    Ok((StatusCode::ACCEPTED, Json(SubmitResponse { job_id })))
}

async fn poll(State(gw): State<Gateway>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(gw.job(&id)?).into_response())
}

async fn metrics(State(gw): State<Gateway>) -> Response {
    Json(gw.metrics()).into_response()
}

async fn healthz(State(gw): State<Gateway>) -> Response {
    Json(gw.health()).into_response()
}

async fn fuse(State(gw): State<Gateway>, body: Bytes) -> Result<Response, ServiceError> {
    let req: FuseRequest = parse(&body)?;
    Ok(Json(gw.fuse(&req)?).into_response())
}

pub fn router(gateway: Gateway) -> Router {
    Router::new()
        .route("/v1/jobs", post(submit))
        .route("/v1/jobs/{id}", get(poll))
        .route("/v1/metrics", get(metrics))
        .route("/v1/healthz", get(healthz))
        .route("/v1/fuse", post(fuse))
        .with_state(gateway)
}

/// Serves the API on `listener` until the task is dropped.
pub async fn serve(gateway: Gateway, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(gateway)).await
}
