#![allow(dead_code)]

use std::time::{Duration, Instant};

use itsgw_core::api::{JobParams, Payload, SubmitRequest};
use itsgw_core::audio::encode_wav;
use itsgw_core::dataset::{speed_labels, synthetic_speed_records, synthetic_tone_clips, write_tabular_csv};
use itsgw_core::model::{GrayImage, JobEnvelope, LabelSchema, Modality, ModalityInput, SensorRecord};
use itsgw_core::pipeline::{train_classifier, Classifier, ClassifierTraining, ModelShape};
use itsgw_core::train::TrainConfig;
use itsgw_core::visual::encode_pgm;
use itsgw_service::{Gateway, GatewayConfig};

pub fn tiny_training() -> ClassifierTraining {
    let mut options = ClassifierTraining::default_for(Modality::TimeSeries);
    options.shape = ModelShape {
        layers: 1,
        heads: 2,
        d_model: 16,
        d_ff: 32,
        max_len: 32,
    };
    options.train = TrainConfig {
        epochs: 2,
        batch_size: 16,
        ..TrainConfig::default()
    };
    options
}

pub fn tiny_classifier() -> Classifier {
    let inputs: Vec<ModalityInput> = synthetic_speed_records(120, 1)
        .into_iter()
        .map(ModalityInput::TimeSeries)
        .collect();
    train_classifier(Modality::TimeSeries, &inputs, None, &speed_labels(), &tiny_training())
        .unwrap()
        .0
}

pub fn tiny_audio_classifier() -> Classifier {
    let inputs: Vec<ModalityInput> = synthetic_tone_clips(8, 2)
        .into_iter()
        .map(ModalityInput::Audio)
        .collect();
    let labels = LabelSchema::classification(["low", "high"]).unwrap();
    let mut options = tiny_training();
    options.train.epochs = 1;
    options.train.batch_size = 4;
    train_classifier(Modality::Audio, &inputs, None, &labels, &options)
        .unwrap()
        .0
}

pub fn record_csv(record: &SensorRecord) -> Vec<u8> {
    write_tabular_csv(std::slice::from_ref(record), &speed_labels())
        .unwrap()
        .into_bytes()
}

pub fn tabular_request(record: &SensorRecord) -> SubmitRequest {
    SubmitRequest {
        modality: Modality::TimeSeries,
        payload: Payload::inline(&record_csv(record)),
        params: JobParams::default(),
    }
}

pub fn audio_request(samples: &[i16]) -> SubmitRequest {
    SubmitRequest {
        modality: Modality::Audio,
        payload: Payload::inline(&encode_wav(samples, 16_000, 1)),
        params: JobParams::default(),
    }
}

/// Frames of uniform intensity: dark, dim, bright, bright.
pub fn video_frames() -> Vec<GrayImage> {
    [10u8, 100, 200, 200]
        .iter()
        .map(|&v| GrayImage::filled(16, 12, v))
        .collect()
}

pub fn video_request() -> SubmitRequest {
    let bytes: Vec<u8> = video_frames().iter().flat_map(encode_pgm).collect();
    SubmitRequest {
        modality: Modality::Video,
        payload: Payload::inline(&bytes),
        params: JobParams::default(),
    }
}

pub fn config() -> GatewayConfig {
    GatewayConfig::default()
}

pub fn gateway_with_model(config: GatewayConfig) -> Gateway {
    let gw = Gateway::open(config).unwrap();
    gw.engine().install(tiny_classifier());
    gw
}

pub async fn wait_terminal(gw: &Gateway, id: &str) -> JobEnvelope {
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let env = gw.job(id).unwrap();
        if env.status.is_terminal() {
            return env;
        }
        assert!(Instant::now() < deadline, "job {id} did not finish");
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
}

pub async fn wait_all_terminal(gw: &Gateway, expected: usize) -> Vec<JobEnvelope> {
    let deadline = Instant::now() + Duration::from_secs(120);
    loop {
        let jobs = gw.jobs();
        if jobs.len() >= expected && jobs.iter().all(|j| j.status.is_terminal()) {
            return jobs;
        }
        assert!(Instant::now() < deadline, "jobs did not finish");
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}
