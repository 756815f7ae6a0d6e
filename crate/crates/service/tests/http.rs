mod common;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use common::*;
use itsgw_core::api::{ErrorBody, FuseResponse, HealthResponse, SubmitResponse};
use itsgw_core::dataset::synthetic_speed_records;
use itsgw_core::model::{JobEnvelope, JobStatus, MetricsReport};
use itsgw_service::http::router;
use itsgw_service::Gateway;
use tower::ServiceExt;

async fn call(gw: &Gateway, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = router(gw.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

fn submit_body(record_index: usize) -> String {
    serde_json::to_string(&tabular_request(&synthetic_speed_records(8, 4)[record_index])).unwrap()
}

#[tokio::test]
async fn submit_poll_and_status_codes() {
    let mut cfg = config();
    cfg.queue_capacity = 2;
    let gw = gateway_with_model(cfg);

    let (status, body) = call(&gw, "POST", "/v1/jobs", Some(submit_body(0))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let SubmitResponse { job_id } = serde_json::from_slice(&body).unwrap();

    let (status, body) = call(&gw, "GET", &format!("/v1/jobs/{job_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let env: JobEnvelope = serde_json::from_slice(&body).unwrap();
    assert_eq!(env.status, JobStatus::Queued);
    let raw: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert!(raw.get("result").is_none() && raw.get("error").is_none());

    call(&gw, "POST", "/v1/jobs", Some(submit_body(1))).await;
    let (status, body) = call(&gw, "POST", "/v1/jobs", Some(submit_body(2))).await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    assert_eq!(serde_json::from_slice::<ErrorBody>(&body).unwrap().code, "QueueFull");

    let (status, body) = call(&gw, "GET", "/v1/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    let health: HealthResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(
        (health.status.as_str(), health.workers, health.queue_depth),
        ("ok", 4, 2)
    );

    let (status, _) = call(&gw, "GET", "/v1/jobs/j99999999-00000000", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = call(&gw, "POST", "/v1/jobs", Some("{\"modality\":\"smell\"}".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(
        serde_json::from_slice::<ErrorBody>(&body).unwrap().code,
        "ValidationFailed"
    );
}

#[tokio::test]
async fn terminal_bodies_are_byte_identical() {
    let gw = gateway_with_model(config());
    gw.start_workers();
    let (_, body) = call(&gw, "POST", "/v1/jobs", Some(submit_body(3))).await;
    let SubmitResponse { job_id } = serde_json::from_slice(&body).unwrap();
    wait_terminal(&gw, &job_id).await;
    let uri = format!("/v1/jobs/{job_id}");
    let (_, first) = call(&gw, "GET", &uri, None).await;
    let (_, second) = call(&gw, "GET", &uri, None).await;
    assert_eq!(first, second);
    assert!(String::from_utf8(first).unwrap().contains("\"status\":\"succeeded\""));

    let (status, body) = call(&gw, "GET", "/v1/metrics", None).await;
    assert_eq!(status, StatusCode::OK);
    let report: MetricsReport = serde_json::from_slice(&body).unwrap();
    assert_eq!(report.rows.len(), 1);
}

#[tokio::test]
async fn fuse_finished_jobs() {
    let gw = gateway_with_model(config());
    gw.start_workers();
    let mut ids = Vec::new();
    for i in 0..2 {
        let (_, body) = call(&gw, "POST", "/v1/jobs", Some(submit_body(i))).await;
        ids.push(serde_json::from_slice::<SubmitResponse>(&body).unwrap().job_id);
    }
    let envs = [wait_terminal(&gw, &ids[0]).await, wait_terminal(&gw, &ids[1]).await];
    let dist = |e: &JobEnvelope| match &e.result {
        Some(itsgw_core::model::JobResult::Classification { distribution, .. }) => distribution.clone(),
        other => panic!("{other:?}"),
    };

    // Weight 0 on the second job projects onto the first.
    let req = serde_json::json!({"job_ids": ids, "weights": [1.0, 0.0]}).to_string();
    let (status, body) = call(&gw, "POST", "/v1/fuse", Some(req)).await;
    assert_eq!(status, StatusCode::OK);
    let fused: FuseResponse = serde_json::from_slice(&body).unwrap();
    assert_eq!(fused.distribution, dist(&envs[0]));

    let req = serde_json::json!({"job_ids": ids}).to_string();
    let (status, body) = call(&gw, "POST", "/v1/fuse", Some(req)).await;
    assert_eq!(status, StatusCode::OK);
    let fused: FuseResponse = serde_json::from_slice(&body).unwrap();
    assert!((fused.weights[0] - 0.5).abs() < 1e-15);

    let req = serde_json::json!({"job_ids": ids, "weights": [0.0, 0.0]}).to_string();
    let (status, body) = call(&gw, "POST", "/v1/fuse", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(
        serde_json::from_slice::<ErrorBody>(&body).unwrap().code,
        "AllZeroWeights"
    );

    let video = gw.submit(video_request()).unwrap();
    wait_terminal(&gw, &video).await;
    let req = serde_json::json!({"job_ids": [ids[0].clone(), video]}).to_string();
    let (status, _) = call(&gw, "POST", "/v1/fuse", Some(req)).await;
    assert_eq!(status, StatusCode::CONFLICT);
}
