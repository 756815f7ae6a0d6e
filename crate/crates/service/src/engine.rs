//! Job execution: each modality goes to its classifier or to the caption
//! chain. Classifiers are frozen snapshots behind `Arc`; a retrain swaps the
//! snapshot, it never mutates one in place.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use itsgw_core::api::JobParams;
use itsgw_core::dataset::{load_audio_manifest, load_tabular_csv};
use itsgw_core::model::{FrameSequence, JobError, JobResult, LabelSchema, Modality, ModalityInput};
use itsgw_core::pipeline::{train_classifier, Classifier, ClassifierTraining, ModelShape};
use itsgw_core::protocol::{BackendEndpoint, ExternalBackend};
use itsgw_core::visual::{
    run_caption_chain, BuiltinCaptioner, CaptionChainResult, ChainOptions, Provenance, RefineTask,
};
use itsgw_core::{Error, Result};

use crate::config::GatewayConfig;

pub const MODEL_UNAVAILABLE: &str = "ModelUnavailable";
pub const NO_TRAINING_DATA: &str = "NoTrainingData";

fn endpoint_name(endpoint: &BackendEndpoint) -> String {
    match endpoint {
        BackendEndpoint::Command(cmd) => cmd.clone(),
        BackendEndpoint::Tcp(addr) => format!("tcp://{addr}"),
    }
}

/// Ground-truth class carried by the payload itself, if any.
pub fn input_label(input: &ModalityInput) -> Option<usize> {
    match input {
        ModalityInput::TimeSeries(r) => r.label,
        ModalityInput::Audio(c) => c.label,
        ModalityInput::Video(_) => None,
    }
}

pub struct Engine {
    config: GatewayConfig,
    labels: Option<LabelSchema>,
    classifiers: RwLock<BTreeMap<Modality, Arc<Classifier>>>,
    idle_backends: Mutex<Vec<ExternalBackend>>,
}

impl Engine {
    /// Loads every configured checkpoint.
    pub fn from_config(config: &GatewayConfig) -> Result<Self> {
        let labels = config.labels()?;
        let engine = Self {
            config: config.clone(),
            labels: labels.clone(),
            classifiers: RwLock::new(BTreeMap::new()),
            idle_backends: Mutex::new(Vec::new()),
        };
        for (&modality, path) in &config.checkpoints {
            let classifier = Classifier::load(
                path,
                config.vocabs.get(&modality).map(PathBuf::as_path),
                labels.as_ref(),
            )?;
            if classifier.modality != modality {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint {} holds a {} model, configured for {modality}",
                    path.display(),
                    classifier.modality
                )));
            }
            engine.install(classifier);
        }
        Ok(engine)
    }

    pub fn install(&self, classifier: Classifier) {
        let mut map = self.classifiers.write().expect("classifier lock");
        map.insert(classifier.modality, Arc::new(classifier));
    }

    pub fn classifier(&self, modality: Modality) -> Option<Arc<Classifier>> {
        self.classifiers
            .read()
            .expect("classifier lock")
            .get(&modality)
            .cloned()
    }

    /// Schema used to read labels for `modality`: the loaded model's, then
    /// the configured schema, then the built-in demo schema.
    pub fn labels_for(&self, modality: Modality) -> LabelSchema {
        if modality == Modality::Video {
            return LabelSchema::captioning();
        }
        match self.classifier(modality) {
            Some(c) => c.labels.clone(),
            None => self.labels.clone().unwrap_or_else(LabelSchema::demo),
        }
    }

    pub fn chain_options(&self, params: &JobParams) -> ChainOptions {
        ChainOptions {
            task: params.task.unwrap_or(RefineTask::Summarize),
            stride: params.stride.unwrap_or(self.config.caption_stride),
            max_frames: params.max_frames.unwrap_or(self.config.caption_max_frames),
            fallback_to_builtin: self.config.fallback_to_builtin,
        }
    }

    pub fn infer(&self, input: &ModalityInput, params: &JobParams) -> Result<JobResult, JobError> {
        match input {
            ModalityInput::Video(seq) => self
                .caption(seq, &self.chain_options(params))
                .map(JobResult::Caption)
                .map_err(|e| JobError::from(&e)),
            other => {
                let modality = other.modality();
                let classifier = self
                    .classifier(modality)
                    .ok_or_else(|| JobError::new(MODEL_UNAVAILABLE, format!("no {modality} model is loaded")))?;
                let p = classifier.classify(other).map_err(|e| JobError::from(&e))?;
                Ok(JobResult::Classification {
                    class_index: p.class_index,
                    class_name: p.class_name,
                    distribution: p.distribution,
                })
            }
        }
    }

    /// Runs the caption chain on the configured backend. Connections are
    /// reused across jobs; one that fell back after a timeout is dropped.
    pub fn caption(&self, seq: &FrameSequence, options: &ChainOptions) -> Result<CaptionChainResult> {
        let Some(endpoint) = &self.config.backend else {
            return run_caption_chain(seq, &mut BuiltinCaptioner, options);
        };
        let pooled = self.idle_backends.lock().expect("backend pool").pop();
        let mut backend = match pooled {
            Some(b) => b,
            None => match ExternalBackend::connect(endpoint, Duration::from_millis(self.config.backend_timeout_ms)) {
                Ok(b) => b,
                Err(err @ Error::BackendTimeout(_)) if options.fallback_to_builtin => {
                    tracing::warn!(backend = %endpoint_name(endpoint), error = %err, "backend handshake timed out");
                    let mut result = run_caption_chain(seq, &mut BuiltinCaptioner, options)?;
                    result.provenance = Provenance::BuiltinFallback {
                        backend: endpoint_name(endpoint),
                        reason: err.to_string(),
                    };
                    return Ok(result);
                }
                Err(err) => return Err(err),
            },
        };
        let result = run_caption_chain(seq, &mut backend, options);
        if let Ok(r) = &result {
            if !matches!(r.provenance, Provenance::BuiltinFallback { .. }) {
                self.idle_backends.lock().expect("backend pool").push(backend);
            }
        }
        result
    }

    /// Retrains `modality` on its configured dataset. The new checkpoint is
    /// written next to the data; it replaces the live model only with
    /// `auto_deploy`.
    pub fn retrain(&self, modality: Modality, window_accuracy: f64, job_id: &str) -> Result<JobResult, JobError> {
        let data = self
            .config
            .train_data
            .get(&modality)
            .ok_or_else(|| JobError::new(NO_TRAINING_DATA, format!("no train_data.{modality} configured")))?;
        let run = || -> Result<JobResult> {
            let labels = self.labels_for(modality);
            let inputs = load_inputs(modality, data, &labels)?;
            let split = (inputs.len() * 4 / 5).max(1).min(inputs.len());
            let (train_set, eval_set) = inputs.split_at(split);
            let eval = (!eval_set.is_empty()).then_some(eval_set);
            let mut options = ClassifierTraining::default_for(modality);
            if let Some(current) = self.classifier(modality) {
                let c = current.model.config();
                options.shape = ModelShape {
                    layers: c.layers,
                    heads: c.heads,
                    d_model: c.d_model,
                    d_ff: c.d_ff,
                    max_len: c.max_len,
                };
            }
            let (classifier, _) = train_classifier(modality, train_set, eval, &labels, &options)?;
            let out = retrain_path(
                self.config.checkpoints.get(&modality).map(PathBuf::as_path),
                data,
                modality,
                job_id,
            );
            classifier.save(&out)?;
            let eval_accuracy = classifier.eval_accuracy;
            if self.config.auto_deploy {
                self.install(classifier);
            }
            Ok(JobResult::Retrain {
                modality,
                window_accuracy,
                eval_accuracy,
                checkpoint: Some(out.display().to_string()),
                deployed: self.config.auto_deploy,
            })
        };
        run().map_err(|e| JobError::from(&e))
    }
}

fn retrain_path(checkpoint: Option<&Path>, data: &Path, modality: Modality, job_id: &str) -> PathBuf {
    let dir = checkpoint
        .or(Some(data))
        .and_then(Path::parent)
        .unwrap_or(Path::new("."));
    dir.join(format!("{modality}-{job_id}.ckpt"))
}

/// Reads a labeled dataset: tabular CSV for time series, a WAV manifest for
/// audio.
pub fn load_inputs(modality: Modality, path: &Path, labels: &LabelSchema) -> Result<Vec<ModalityInput>> {
    match modality {
        Modality::TimeSeries => Ok(load_tabular_csv(path, labels)?
            .into_iter()
            .map(ModalityInput::TimeSeries)
            .collect()),
        Modality::Audio => Ok(load_audio_manifest(path, labels)?
            .into_iter()
            .map(ModalityInput::Audio)
            .collect()),
        Modality::Video => Err(Error::InvalidInput("video datasets are not trainable".into())),
    }
}
