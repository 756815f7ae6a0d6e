use std::time::Duration;

use itsgw_client::GatewayClient;
use itsgw_core::api::{JobParams, Payload, SubmitRequest};
use itsgw_core::model::{GrayImage, JobResult, JobStatus, Modality};
use itsgw_core::visual::encode_pgm;
use itsgw_service::{Gateway, GatewayConfig};

async fn start(config: GatewayConfig) -> GatewayClient {
    let gw = Gateway::open(config).unwrap();
    gw.start_workers();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(itsgw_service::http::serve(gw, listener));
    GatewayClient::new(&addr.to_string())
}

fn video() -> SubmitRequest {
    SubmitRequest {
        modality: Modality::Video,
        payload: Payload::inline(&encode_pgm(&GrayImage::filled(8, 8, 250))),
        params: JobParams::default(),
    }
}

#[tokio::test]
async fn submit_wait_and_inspect() {
    let client = start(GatewayConfig::default()).await;
    let health = client.health().await.unwrap();
    assert_eq!(health.status, "ok");
    let id = client.submit(&video()).await.unwrap();
    let env = client
        .wait(&id, Duration::from_millis(5), Duration::from_secs(30))
        .await
        .unwrap();
    assert_eq!(env.status, JobStatus::Succeeded);
    let Some(JobResult::Caption(result)) = env.result else {
        panic!()
    };
    assert_eq!(result.refined_text, "summary: a bright scene with low contrast");
    let report = client.metrics().await.unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].task, "Captioning");
}

#[tokio::test]
async fn api_errors_carry_codes() {
    let config = GatewayConfig {
        queue_capacity: 1,
        ..GatewayConfig::default()
    };
    let gw = Gateway::open(config).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(itsgw_service::http::serve(gw, listener));
    let client = GatewayClient::new(&format!("http://{addr}/"));

    client.submit(&video()).await.unwrap();
    let err = client.submit(&video()).await.unwrap_err();
    assert_eq!(err.code(), Some("QueueFull"));
    let err = client.job("nope").await.unwrap_err();
    assert!(matches!(err, itsgw_client::ClientError::Api { status: 404, .. }));
    let mut bad = video();
    bad.payload = Payload::inline(b"P5 nonsense");
    assert_eq!(client.submit(&bad).await.unwrap_err().code(), Some("ValidationFailed"));
}
