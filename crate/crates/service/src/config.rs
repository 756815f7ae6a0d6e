//! Gateway configuration: flat `key=value` lines, `#` comments.
//!
//! Per-modality keys take a suffix, e.g. `checkpoint.time_series=model.ckpt`.
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use itsgw_core::fusion::{DEFAULT_THRESHOLD, DEFAULT_WINDOW};
use itsgw_core::model::{LabelSchema, Modality};
use itsgw_core::protocol::BackendEndpoint;
use itsgw_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub queue_capacity: usize,
    pub worker_count: usize,
    pub http_bind: String,
    pub backend: Option<BackendEndpoint>,
    pub backend_timeout_ms: u64,
    pub fallback_to_builtin: bool,
    pub job_log_path: Option<PathBuf>,
    pub checkpoints: BTreeMap<Modality, PathBuf>,
    pub vocabs: BTreeMap<Modality, PathBuf>,
    pub label_schema: Option<PathBuf>,
    /// Measure latency from submission instead of from dequeue.
    pub latency_includes_queue: bool,
    pub feedback_window: usize,
    pub feedback_threshold: f64,
    pub auto_deploy: bool,
    pub train_data: BTreeMap<Modality, PathBuf>,
    /// NDJSON measurement fixture read by `itsgw profile`.
    pub profile_measurements: Option<PathBuf>,
    pub caption_stride: usize,
    pub caption_max_frames: usize,
    /// Number of latency samples kept per modality.
    pub metrics_window: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            queue_capacity: 1024,
            worker_count: 4,
            http_bind: "127.0.0.1:8080".into(),
            backend: None,
            backend_timeout_ms: 10_000,
            fallback_to_builtin: true,
            job_log_path: None,
            checkpoints: BTreeMap::new(),
            vocabs: BTreeMap::new(),
            label_schema: None,
            latency_includes_queue: false,
            feedback_window: DEFAULT_WINDOW,
            feedback_threshold: DEFAULT_THRESHOLD,
            auto_deploy: false,
            train_data: BTreeMap::new(),
            profile_measurements: None,
            caption_stride: 1,
            caption_max_frames: 16,
            metrics_window: 100,
        }
    }
}

fn invalid(msg: String) -> Error {
    Error::InvalidConfig(msg)
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| invalid(format!("`{key}` expects a number, got `{value}`")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(invalid(format!("`{key}` expects true or false, got `{value}`"))),
    }
}

impl GatewayConfig {
    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c = Self::default();
        let path = |v: &str| base.join(v);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected key=value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some((prefix, m)) = key.split_once('.') {
                let modality: Modality = m.parse()?;
                let map = match prefix {
                    "checkpoint" => &mut c.checkpoints,
                    "vocab" => &mut c.vocabs,
                    "train_data" => &mut c.train_data,
                    _ => return Err(invalid(format!("line {}: unknown key `{key}`", n + 1))),
                };
                map.insert(modality, path(value));
                continue;
            }
            match key {
                "queue_capacity" => c.queue_capacity = number(key, value)?,
                "worker_count" => c.worker_count = number(key, value)?,
                "http_bind" => c.http_bind = value.to_string(),
                "backend_command" => c.backend = Some(BackendEndpoint::Command(value.to_string())),
                "backend_tcp" => c.backend = Some(BackendEndpoint::Tcp(value.to_string())),
                "backend_timeout_ms" => c.backend_timeout_ms = number(key, value)?,
                "fallback_to_builtin" => c.fallback_to_builtin = boolean(key, value)?,
                "job_log_path" => c.job_log_path = Some(path(value)),
                "label_schema" => c.label_schema = Some(path(value)),
                "latency_includes_queue" => c.latency_includes_queue = boolean(key, value)?,
                "feedback_window" => c.feedback_window = number(key, value)?,
                "feedback_threshold" => c.feedback_threshold = number(key, value)?,
                "auto_deploy" => c.auto_deploy = boolean(key, value)?,
                "profile_measurements" => c.profile_measurements = Some(path(value)),
                "caption_stride" => c.caption_stride = number(key, value)?,
                "caption_max_frames" => c.caption_max_frames = number(key, value)?,
                "metrics_window" => c.metrics_window = number(key, value)?,
                _ => return Err(invalid(format!("line {}: unknown key `{key}`", n + 1))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.queue_capacity == 0 {
            return Err(invalid("queue_capacity must be at least 1".into()));
        }
        if self.worker_count == 0 {
            return Err(invalid("worker_count must be at least 1".into()));
        }
        if self.backend_timeout_ms == 0 {
            return Err(invalid("backend_timeout_ms must be positive".into()));
        }
        if self.feedback_window == 0 || !(self.feedback_threshold > 0.0 && self.feedback_threshold < 1.0) {
            return Err(invalid(
                "feedback_window must be >= 1 and feedback_threshold in (0, 1)".into(),
            ));
        }
        if self.caption_stride == 0 || self.caption_max_frames == 0 || self.metrics_window == 0 {
            return Err(invalid(
                "caption_stride, caption_max_frames and metrics_window must be >= 1".into(),
            ));
        }
        if self.checkpoints.contains_key(&Modality::Video) {
            return Err(invalid("video is captioned and takes no checkpoint".into()));
        }
        Ok(())
    }

    pub fn labels(&self) -> Result<Option<LabelSchema>> {
        self.label_schema
            .as_deref()
            .map(|p| LabelSchema::parse(&std::fs::read_to_string(p)?))
            .transpose()
    }
}
