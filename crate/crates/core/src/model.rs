//! Shared domain vocabulary: label schemas, modality inputs, job envelopes and
//! metrics rows.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::visual::CaptionChainResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    TimeSeries,
    Audio,
    Video,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::TimeSeries, Modality::Audio, Modality::Video];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::TimeSeries => "time_series",
            Modality::Audio => "audio",
            Modality::Video => "video",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time_series" | "time-series" | "timeseries" => Ok(Modality::TimeSeries),
            "audio" => Ok(Modality::Audio),
            "video" => Ok(Modality::Video),
            other => Err(Error::InvalidInput(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Captioning,
}

impl TaskKind {
    /// Display name used in metrics rows.
    pub fn label(self) -> &'static str {
        match self {
            TaskKind::Classification => "Classification",
            TaskKind::Captioning => "Captioning",
        }
    }
}

/// Ordered class names plus the task they describe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    class_names: Vec<String>,
    task_kind: TaskKind,
}

impl LabelSchema {
    pub fn classification<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let class_names: Vec<String> = names.into_iter().map(Into::into).collect();
        if class_names.len() < 2 {
            return Err(Error::InvalidConfig(
                "classification schemas need at least 2 classes".into(),
            ));
        }
        for (i, name) in class_names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::InvalidConfig("class names must be non-empty".into()));
            }
            if class_names[..i].contains(name) {
                return Err(Error::InvalidConfig(format!("duplicate class name `{name}`")));
            }
        }
        Ok(Self {
            class_names,
            task_kind: TaskKind::Classification,
        })
    }

    pub fn captioning() -> Self {
        Self {
            class_names: Vec::new(),
            task_kind: TaskKind::Captioning,
        }
    }

    /// The 3-class demo schema used when no schema file is configured.
    pub fn demo() -> Self {
        Self::classification(["normal", "warning", "fault"]).expect("demo schema is valid")
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_names.is_empty()
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// Resolves a label given either as a class name or as a numeric index.
    pub fn resolve(&self, label: &str) -> Result<usize> {
        let label = label.trim();
        if let Some(i) = self.index_of(label) {
            return Ok(i);
        }
        match label.parse::<usize>() {
            Ok(i) if i < self.len() => Ok(i),
            Ok(i) => Err(Error::LabelOutOfRange {
                label: i,
                classes: self.len(),
            }),
            Err(_) => Err(Error::InvalidInput(format!("unknown class `{label}`"))),
        }
    }

    /// Parses the schema file format: optional `task=<kind>` line, then one
    /// class name per line. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut task = TaskKind::Classification;
        let mut names = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(kind) = line.strip_prefix("task=") {
                task = match kind.trim() {
                    "classification" => TaskKind::Classification,
                    "captioning" => TaskKind::Captioning,
                    other => return Err(Error::InvalidConfig(format!("unknown task `{other}`"))),
                };
                continue;
            }
            names.push(line.to_string());
        }
        match task {
            TaskKind::Classification => Self::classification(names),
            TaskKind::Captioning if names.is_empty() => Ok(Self::captioning()),
            TaskKind::Captioning => Err(Error::InvalidConfig("captioning schemas carry no classes".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
}

impl FieldSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::Numeric,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::Categorical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Numeric(f64),
    Categorical(String),
}

impl FieldValue {
    pub fn kind(&self) -> FieldKind {
        match self {
            FieldValue::Numeric(_) => FieldKind::Numeric,
            FieldValue::Categorical(_) => FieldKind::Categorical,
        }
    }
}

/// One row of tabular sensor data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    pub schema: Vec<FieldSpec>,
    pub values: Vec<FieldValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

impl SensorRecord {
    pub fn new(schema: Vec<FieldSpec>, values: Vec<FieldValue>, label: Option<usize>) -> Self {
        Self { schema, values, label }
    }
}

/// Checks a record against the expected field schema and the class count of
/// the active label schema.
pub fn validate_record(schema: &[FieldSpec], record: &SensorRecord, class_count: usize) -> Result<()> {
    if record.schema.len() != schema.len() || record.values.len() != schema.len() {
        return Err(Error::SchemaMismatch(format!(
            "expected {} fields, record has {} schema entries and {} values",
            schema.len(),
            record.schema.len(),
            record.values.len()
        )));
    }
    for ((expected, declared), value) in schema.iter().zip(&record.schema).zip(&record.values) {
        if expected != declared {
            return Err(Error::SchemaMismatch(format!(
                "field `{}` does not match expected `{}`",
                declared.name, expected.name
            )));
        }
        if value.kind() != expected.kind {
            return Err(Error::SchemaMismatch(format!(
                "field `{}` expects a {:?} value",
                expected.name, expected.kind
            )));
        }
        if let FieldValue::Numeric(v) = value {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    field: expected.name.clone(),
                });
            }
        }
    }
    if let Some(label) = record.label {
        if label >= class_count {
            return Err(Error::LabelOutOfRange {
                label,
                classes: class_count,
            });
        }
    }
    Ok(())
}

pub const AUDIO_SAMPLE_RATE_HZ: u32 = 16_000;

/// Mono PCM16 audio.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioClip {
    pub samples: Vec<i16>,
    pub sample_rate_hz: u32,
    pub label: Option<usize>,
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{}x{} image needs {} pixels, got {}",
                width,
                height,
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Temporally ordered frames of one source; all frames share dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequence {
    frames: Vec<GrayImage>,
    source_id: String,
}

impl FrameSequence {
    pub fn new(frames: Vec<GrayImage>, source_id: impl Into<String>) -> Result<Self> {
        if let Some(first) = frames.first() {
            if first.width < 8 || first.height < 8 {
                return Err(Error::ImageTooSmall {
                    width: first.width,
                    height: first.height,
                });
            }
            if let Some(bad) = frames
                .iter()
                .find(|f| f.width != first.width || f.height != first.height)
            {
                return Err(Error::InvalidImage(format!(
                    "frame is {}x{} but the sequence is {}x{}",
                    bad.width, bad.height, first.width, first.height
                )));
            }
        }
        Ok(Self {
            frames,
            source_id: source_id.into(),
        })
    }

    pub fn frames(&self) -> &[GrayImage] {
        &self.frames
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// A decoded unit of work for one modality.
#[derive(Debug, Clone)]
pub enum ModalityInput {
    TimeSeries(SensorRecord),
    Audio(AudioClip),
    Video(FrameSequence),
}

impl ModalityInput {
    pub fn modality(&self) -> Modality {
        match self {
            ModalityInput::TimeSeries(_) => Modality::TimeSeries,
            ModalityInput::Audio(_) => Modality::Audio,
            ModalityInput::Video(_) => Modality::Video,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Succeeded | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobEvent {
    Start,
    FinishOk,
    FinishErr,
}

pub fn job_transition(current: JobStatus, event: JobEvent) -> Result<JobStatus> {
    match (current, event) {
        (JobStatus::Queued, JobEvent::Start) => Ok(JobStatus::Running),
        (JobStatus::Running, JobEvent::FinishOk) => Ok(JobStatus::Succeeded),
        (JobStatus::Running, JobEvent::FinishErr) => Ok(JobStatus::Failed),
        (from, event) => Err(Error::IllegalTransition { from, event }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    #[default]
    Inference,
    Retrain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobError {
    pub code: String,
    pub message: String,
}

impl JobError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            message: message.into(),
        }
    }
}

impl From<&Error> for JobError {
    fn from(err: &Error) -> Self {
        Self::new(err.code(), err.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JobResult {
    Classification {
        class_index: usize,
        class_name: String,
        distribution: Vec<f64>,
    },
    Caption(CaptionChainResult),
    Retrain {
        modality: Modality,
        window_accuracy: f64,
        eval_accuracy: Option<f64>,
        checkpoint: Option<String>,
        deployed: bool,
    },
}

/// The observable state of one asynchronous job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobEnvelope {
    pub job_id: String,
    #[serde(default)]
    pub kind: JobKind,
    pub modality: Modality,
    pub payload_digest: String,
    pub status: JobStatus,
    pub submitted_at_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<JobResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<JobError>,
}

impl JobEnvelope {
    pub fn queued(
        job_id: impl Into<String>,
        kind: JobKind,
        modality: Modality,
        payload_digest: impl Into<String>,
        submitted_at_us: u64,
    ) -> Self {
        Self {
            job_id: job_id.into(),
            kind,
            modality,
            payload_digest: payload_digest.into(),
            status: JobStatus::Queued,
            submitted_at_us,
            started_at_us: None,
            finished_at_us: None,
            latency_ms: None,
            result: None,
            error: None,
        }
    }

    pub fn start(&mut self, now_us: u64) -> Result<()> {
        self.status = job_transition(self.status, JobEvent::Start)?;
        self.started_at_us = Some(now_us.max(self.submitted_at_us));
        Ok(())
    }

    /// Moves a running job to its terminal state. Timestamps are clamped so
    /// that submitted <= started <= finished always holds.
    pub fn finish(&mut self, now_us: u64, outcome: Result<JobResult, JobError>, latency_ms: f64) -> Result<()> {
        let event = if outcome.is_ok() {
            JobEvent::FinishOk
        } else {
            JobEvent::FinishErr
        };
        self.status = job_transition(self.status, event)?;
        let started = self.started_at_us.unwrap_or(self.submitted_at_us);
        self.finished_at_us = Some(now_us.max(started));
        self.latency_ms = Some(latency_ms.max(0.0));
        match outcome {
            Ok(result) => self.result = Some(result),
            Err(error) => self.error = Some(error),
        }
        Ok(())
    }
}

/// One line of the per-modality performance report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy_pct: Option<f64>,
    pub mac_gop: f64,
    pub task: String,
    pub latency_ms: f64,
}

impl MetricsRow {
    pub fn mac_count_to_gop(mac_count: u64) -> f64 {
        mac_count as f64 / 1e9
    }

    /// Tab-separated rendering: accuracy to 2 decimals, GOP to 1 decimal (more
    /// when needed to show a significant digit), latency to 1 decimal.
    pub fn format(&self) -> String {
        let accuracy = match self.accuracy_pct {
            Some(a) => format!("{a:.2}%"),
            None => "n/a".to_string(),
        };
        format!(
            "{}\t{}\t{}\t{}\t{:.1}",
            self.modality,
            accuracy,
            format_gop(self.mac_gop),
            self.task,
            self.latency_ms
        )
    }
}

fn format_gop(gop: f64) -> String {
    if gop <= 0.0 || gop >= 0.05 {
        return format!("{gop:.1}");
    }
    let decimals = (-gop.log10().floor()) as usize;
    format!("{gop:.decimals$}")
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn header() -> &'static str {
        "modality\taccuracy\tmac_gop\ttask\tlatency_ms"
    }

    pub fn format(&self) -> String {
        let mut out = String::from(Self::header());
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.format());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speed_schema() -> Vec<FieldSpec> {
        vec![FieldSpec::numeric("speed_kph")]
    }

    #[test]
    fn valid_record_passes() {
        let rec = SensorRecord::new(speed_schema(), vec![FieldValue::Numeric(42.5)], None);
        validate_record(&speed_schema(), &rec, 3).unwrap();
    }

    #[test]
    fn nan_is_rejected() {
        let rec = SensorRecord::new(speed_schema(), vec![FieldValue::Numeric(f64::NAN)], None);
        assert!(matches!(
            validate_record(&speed_schema(), &rec, 3),
            Err(Error::NonFiniteValue { .. })
        ));
        let rec = SensorRecord::new(speed_schema(), vec![FieldValue::Numeric(f64::INFINITY)], None);
        assert!(matches!(
            validate_record(&speed_schema(), &rec, 3),
            Err(Error::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn short_record_is_schema_mismatch() {
        let schema = vec![FieldSpec::numeric("speed_kph"), FieldSpec::numeric("tire_pressure_psi")];
        let rec = SensorRecord::new(schema.clone(), vec![FieldValue::Numeric(1.0)], None);
        assert!(matches!(
            validate_record(&schema, &rec, 3),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn kind_and_label_checks() {
        let rec = SensorRecord::new(speed_schema(), vec![FieldValue::Categorical("x".into())], None);
        assert!(matches!(
            validate_record(&speed_schema(), &rec, 3),
            Err(Error::SchemaMismatch(_))
        ));
        let rec = SensorRecord::new(speed_schema(), vec![FieldValue::Numeric(1.0)], Some(3));
        assert!(matches!(
            validate_record(&speed_schema(), &rec, 3),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn transition_table() {
        use JobEvent::*;
        use JobStatus::*;
        assert_eq!(job_transition(Queued, Start).unwrap(), Running);
        assert_eq!(job_transition(Running, FinishOk).unwrap(), Succeeded);
        assert_eq!(job_transition(Running, FinishErr).unwrap(), Failed);
        assert!(matches!(
            job_transition(Succeeded, Start),
            Err(Error::IllegalTransition { .. })
        ));
        assert!(job_transition(Queued, FinishOk).is_err());
        assert!(job_transition(Failed, FinishErr).is_err());
    }

    #[test]
    fn table_rows_format_exactly() {
        let rows = [
            (
                Modality::TimeSeries,
                94.48,
                1.8,
                "Classification",
                11.5,
                "time_series\t94.48%\t1.8\tClassification\t11.5",
            ),
            (
                Modality::Audio,
                92.80,
                2.7,
                "Classification",
                13.1,
                "audio\t92.80%\t2.7\tClassification\t13.1",
            ),
            (
                Modality::Video,
                88.73,
                4.5,
                "Captioning",
                13.5,
                "video\t88.73%\t4.5\tCaptioning\t13.5",
            ),
        ];
        for (modality, acc, gop, task, lat, expected) in rows {
            let row = MetricsRow {
                modality,
                accuracy_pct: Some(acc),
                mac_gop: gop,
                task: task.into(),
                latency_ms: lat,
            };
            assert_eq!(row.format(), expected);
        }
    }

    #[test]
    fn small_gop_keeps_a_significant_digit() {
        assert_eq!(format_gop(MetricsRow::mac_count_to_gop(16_777_408)), "0.02");
        assert_eq!(format_gop(0.0), "0.0");
        assert_eq!(format_gop(0.00012), "0.0001");
        assert_eq!(format_gop(0.5), "0.5");
        assert_eq!(format_gop(12.34), "12.3");
    }

    #[test]
    fn schema_file_parsing() {
        let s = LabelSchema::parse("# demo\nnormal\nwarning\n\nfault\n").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.resolve("fault").unwrap(), 2);
        assert_eq!(s.resolve("1").unwrap(), 1);
        assert!(LabelSchema::parse("a\na\n").is_err());
        assert!(LabelSchema::parse("only\n").is_err());
        assert_eq!(
            LabelSchema::parse("task=captioning\n").unwrap().task_kind(),
            TaskKind::Captioning
        );
    }

    #[test]
    fn envelope_lifecycle_sets_exactly_one_outcome() {
        let mut env = JobEnvelope::queued("j1", JobKind::Inference, Modality::Audio, "d", 10);
        env.start(5).unwrap();
        assert_eq!(env.started_at_us, Some(10));
        env.finish(20, Err(JobError::new("ClipTooShort", "short")), 1.0)
            .unwrap();
        assert_eq!(env.status, JobStatus::Failed);
        assert!(env.result.is_none() && env.error.is_some());
        assert!(env.start(30).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn event() -> impl Strategy<Value = JobEvent> {
            prop_oneof![
                Just(JobEvent::Start),
                Just(JobEvent::FinishOk),
                Just(JobEvent::FinishErr)
            ]
        }

        fn independent_check(schema: &[FieldSpec], rec: &SensorRecord, classes: usize) -> bool {
            rec.values.len() == schema.len()
                && rec.schema == schema
                && rec.values.iter().zip(schema).all(|(v, f)| match (v, f.kind) {
                    (FieldValue::Numeric(x), FieldKind::Numeric) => x.is_finite(),
                    (FieldValue::Categorical(_), FieldKind::Categorical) => true,
                    _ => false,
                })
                && rec.label.is_none_or(|l| l < classes)
        }

        proptest! {
            #[test]
            fn status_path_is_prefix_of_lifecycle(events in proptest::collection::vec(event(), 0..12)) {
                let mut status = JobStatus::Queued;
                let mut path = vec![status];
                for e in events {
                    if let Ok(next) = job_transition(status, e) {
                        status = next;
                        path.push(status);
                    }
                }
                prop_assert!(path.len() <= 3);
                prop_assert_eq!(path[0], JobStatus::Queued);
                if path.len() > 1 { prop_assert_eq!(path[1], JobStatus::Running); }
                if path.len() > 2 { prop_assert!(path[2].is_terminal()); }
            }

            #[test]
            fn validation_matches_field_by_field_oracle(
                kinds in proptest::collection::vec(any::<bool>(), 1..5),
                values in proptest::collection::vec(
                    prop_oneof![
                        any::<f64>().prop_map(FieldValue::Numeric),
                        Just(FieldValue::Numeric(f64::NAN)),
                        "[a-z]{1,4}".prop_map(FieldValue::Categorical),
                    ],
                    0..6),
                label in proptest::option::of(0usize..5),
            ) {
                let schema: Vec<FieldSpec> = kinds
                    .iter()
                    .enumerate()
                    .map(|(i, numeric)| if *numeric { FieldSpec::numeric(format!("f{i}")) } else { FieldSpec::categorical(format!("f{i}")) })
                    .collect();
                let rec = SensorRecord::new(schema.clone(), values, label);
                prop_assert_eq!(validate_record(&schema, &rec, 3).is_ok(), independent_check(&schema, &rec, 3));
            }

            #[test]
            fn row_format_is_injective(
                a in 0u32..10_000, b in 0u32..10_000,
                g1 in 0u32..1000, g2 in 0u32..1000,
                l1 in 0u32..1000, l2 in 0u32..1000,
            ) {
                let mk = |acc: u32, gop: u32, lat: u32| MetricsRow {
                    modality: Modality::TimeSeries,
                    accuracy_pct: Some(acc as f64 / 100.0),
                    mac_gop: gop as f64 / 10.0 + 0.1,
                    task: "Classification".into(),
                    latency_ms: lat as f64 / 10.0,
                };
                let differ = (a, g1, l1) != (b, g2, l2);
                prop_assert_eq!(mk(a, g1, l1).format() != mk(b, g2, l2).format(), differ);
            }
        }
    }
}
