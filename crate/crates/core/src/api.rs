//! Request and response bodies of the gateway HTTP API.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{frames_from_pgm_stream, parse_tabular_csv};
use crate::error::{Error, Result};
use crate::model::{LabelSchema, Modality, ModalityInput};
use crate::visual::{load_frame_dir, RefineTask};

/// Job payload: raw bytes inline (base64) or a path readable by the gateway.
///
/// Bytes are a CSV header plus one data row for time series, a WAV file for
/// audio, and one or more concatenated binary PGM images for video. A video
/// path names a directory of `.pgm` frames.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Inline { data_b64: String },
    Path { path: String },
}

impl Payload {
    pub fn inline(bytes: &[u8]) -> Self {
        Payload::Inline {
            data_b64: B64.encode(bytes),
        }
    }

    pub fn path(path: impl Into<String>) -> Self {
        Payload::Path { path: path.into() }
    }

    /// Stable identity of the payload for the job log.
    pub fn describe(&self) -> String {
        match self {
            Payload::Inline { data_b64 } => format!("inline:{}b64", data_b64.len()),
            Payload::Path { path } => format!("path:{path}"),
        }
    }

    /// Decodes and validates the payload for `modality`.
    pub fn resolve(&self, modality: Modality, labels: &LabelSchema) -> Result<ModalityInput> {
        if let (Modality::Video, Payload::Path { path }) = (modality, self) {
            if Path::new(path).is_dir() {
                return Ok(ModalityInput::Video(load_frame_dir(Path::new(path))?));
            }
        }
        let bytes = match self {
            Payload::Inline { data_b64 } => B64
                .decode(data_b64.as_bytes())
                .map_err(|e| Error::InvalidInput(format!("payload is not valid base64: {e}")))?,
            Payload::Path { path } => std::fs::read(path)?,
        };
        decode_payload(modality, &bytes, labels)
    }
}

pub fn decode_payload(modality: Modality, bytes: &[u8], labels: &LabelSchema) -> Result<ModalityInput> {
    match modality {
        Modality::TimeSeries => {
            let text =
                std::str::from_utf8(bytes).map_err(|_| Error::InvalidInput("CSV payload is not UTF-8".into()))?;
            let mut records = parse_tabular_csv(text, labels)?;
            if records.len() != 1 {
                return Err(Error::InvalidInput(format!(
                    "time-series payload must hold exactly one record, found {}",
                    records.len()
                )));
            }
            Ok(ModalityInput::TimeSeries(records.remove(0)))
        }
        Modality::Audio => Ok(ModalityInput::Audio(crate::audio::load_wav(bytes)?)),
        Modality::Video => Ok(ModalityInput::Video(frames_from_pgm_stream(bytes, "inline")?)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JobParams {
    /// Ground-truth class (name or index); feeds the accuracy window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<RefineTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_frames: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub modality: Modality,
    pub payload: Payload,
    #[serde(default)]
    pub params: JobParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub job_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub workers: usize,
    pub queue_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseRequest {
    pub job_ids: Vec<String>,
    /// Explicit weights, one per job; defaults to accuracy-derived weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseResponse {
    pub class_index: usize,
    pub class_name: String,
    pub distribution: Vec<f64>,
    pub weights: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn submit_request_wire_shape() {
        let req: SubmitRequest = serde_json::from_str(
            r#"{"modality":"time_series","payload":{"inline":{"data_b64":"c3BlZWRfa3BoCjQyLjUK"}}}"#,
        )
        .unwrap();
        assert_eq!(req.modality, Modality::TimeSeries);
        assert_eq!(req.params, JobParams::default());
        let input = req.payload.resolve(req.modality, &LabelSchema::demo()).unwrap();
        let ModalityInput::TimeSeries(record) = input else {
            panic!("wrong modality")
        };
        assert_eq!(record.schema[0].name, "speed_kph");
    }

    #[test]
    fn inline_video_is_a_pgm_stream() {
        let frame = crate::visual::encode_pgm(&crate::model::GrayImage::filled(8, 8, 0));
        let bytes = [frame.clone(), frame].concat();
        let input = Payload::inline(&bytes)
            .resolve(Modality::Video, &LabelSchema::captioning())
            .unwrap();
        let ModalityInput::Video(seq) = input else {
            panic!("wrong modality")
        };
        assert_eq!(seq.len(), 2);
    }

    #[test]
    fn bad_payloads_fail_validation() {
        let labels = LabelSchema::demo();
        assert!(Payload::inline(b"speed_kph\nNaN\n")
            .resolve(Modality::TimeSeries, &labels)
            .is_err());
        assert!(Payload::inline(b"RIFF").resolve(Modality::Audio, &labels).is_err());
        let bad_b64 = Payload::Inline { data_b64: "!!".into() };
        assert!(bad_b64.resolve(Modality::Audio, &labels).is_err());
    }
}
