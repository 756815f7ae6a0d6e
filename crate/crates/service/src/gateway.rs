//! The asynchronous processing service.
//!
//! Submissions reserve a slot in one bounded queue or are rejected. `W`
//! workers share the receiving end; each owns one job at a time and runs
//! inference on the blocking pool. Every status change goes to the job log
//! before it becomes visible in the job table.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use itsgw_core::api::{FuseRequest, FuseResponse, HealthResponse, JobParams, Payload, SubmitRequest};
use itsgw_core::fusion::{accuracy_weights, fuse_late, FeedbackState, ModalityPosterior, RetrainEvent};
use itsgw_core::model::{JobEnvelope, JobError, JobKind, JobResult, JobStatus, MetricsReport, Modality, ModalityInput};
use rand::Rng;
use sha2::{Digest, Sha256};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use crate::config::GatewayConfig;
use crate::engine::{input_label, Engine};
use crate::error::{Result, ServiceError};
use crate::joblog::{JobLog, JobLogEntry, Replay};
use crate::metrics::{metrics_row, LatencyWindow};

/// Wall-clock microseconds, never decreasing within one process.
#[derive(Debug, Default)]
pub struct Clock {
    last: AtomicU64,
}

impl Clock {
    pub fn starting_at(us: u64) -> Self {
        Self {
            last: AtomicU64::new(us),
        }
    }

    pub fn now_us(&self) -> u64 {
        let wall = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_micros() as u64);
        self.last.fetch_max(wall, Ordering::SeqCst).max(wall)
    }
}

/// `j<counter>-<random>`; the counter orders ids, the suffix keeps ids from
/// colliding across restarts that lost the counter.
pub fn format_job_id(counter: u64, suffix: u32) -> String {
    format!("j{counter:08}-{suffix:08x}")
}

fn job_counter(id: &str) -> Option<u64> {
    id.strip_prefix('j')?.split('-').next()?.parse().ok()
}

pub fn payload_digest(payload: &Payload) -> String {
    let bytes = serde_json::to_vec(payload).expect("payload serializes");
    let hash = Sha256::digest(&bytes);
    format!("sha256:{hash:x}")
}

enum Work {
    Infer {
        input: ModalityInput,
        params: JobParams,
        label: Option<usize>,
    },
    Retrain {
        window_accuracy: f64,
    },
}

struct QueuedJob {
    job_id: String,
    modality: Modality,
    work: Work,
}

struct Inner {
    config: GatewayConfig,
    engine: Engine,
    clock: Clock,
    counter: AtomicU64,
    jobs: Mutex<BTreeMap<String, JobEnvelope>>,
    log: Option<Mutex<JobLog>>,
    tx: mpsc::Sender<QueuedJob>,
    rx: tokio::sync::Mutex<mpsc::Receiver<QueuedJob>>,
    latencies: Mutex<LatencyWindow>,
    feedback: Mutex<BTreeMap<Modality, FeedbackState>>,
}

#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Inner>,
}

impl Gateway {
    /// Replays the job log (if configured), loads the configured models, and
    /// builds an idle gateway. Call [`Gateway::start_workers`] to begin
    /// processing.
    pub fn open(config: GatewayConfig) -> Result<Self> {
        let engine = Engine::from_config(&config)?;
        Self::with_engine(config, engine)
    }

    pub fn with_engine(config: GatewayConfig, engine: Engine) -> Result<Self> {
        config.validate()?;
        let (log, replay) = match &config.job_log_path {
            Some(path) => {
                let (log, replay) = JobLog::open(path)?;
                (Some(Mutex::new(log)), replay)
            }
            None => (None, Replay::default()),
        };
        if !replay.interrupted.is_empty() {
            tracing::warn!(
                count = replay.interrupted.len(),
                "jobs interrupted by the previous shutdown"
            );
        }
        let counter = replay.jobs.keys().filter_map(|id| job_counter(id)).max().unwrap_or(0);
        let (tx, rx) = mpsc::channel(config.queue_capacity);
        let inner = Inner {
            latencies: Mutex::new(LatencyWindow::new(config.metrics_window)),
            config,
            engine,
            clock: Clock::starting_at(replay.last_timestamp_us),
            counter: AtomicU64::new(counter),
            jobs: Mutex::new(replay.jobs),
            log,
            tx,
            rx: tokio::sync::Mutex::new(rx),
            feedback: Mutex::new(BTreeMap::new()),
        };
        Ok(Self { inner: Arc::new(inner) })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.inner.config
    }

    pub fn engine(&self) -> &Engine {
        &self.inner.engine
    }

    /// Spawns `worker_count` workers on the current tokio runtime.
    pub fn start_workers(&self) -> Vec<JoinHandle<()>> {
        (0..self.inner.config.worker_count)
            .map(|w| {
                let inner = self.inner.clone();
                tokio::spawn(async move {
                    loop {
                        let next = inner.rx.lock().await.recv().await;
                        let Some(job) = next else { break };
                        tracing::debug!(worker = w, job = %job.job_id, "dequeued");
                        execute(&inner, job).await;
                    }
                })
            })
            .collect()
    }

    pub fn submit(&self, req: SubmitRequest) -> Result<String> {
        let inner = &self.inner;
        let labels = inner.engine.labels_for(req.modality);
        let input = req
            .payload
            .resolve(req.modality, &labels)
            .map_err(ServiceError::ValidationFailed)?;
        let label = match &req.params.label {
            Some(l) => Some(labels.resolve(l).map_err(ServiceError::ValidationFailed)?),
            None => input_label(&input),
        };
        if req.params.stride == Some(0) || req.params.max_frames == Some(0) {
            return Err(ServiceError::ValidationFailed(itsgw_core::Error::InvalidInput(
                "stride and max_frames must be at least 1".into(),
            )));
        }
        let work = Work::Infer {
            input,
            params: req.params,
            label,
        };
        enqueue(
            inner,
            req.modality,
            JobKind::Inference,
            payload_digest(&req.payload),
            work,
        )
    }

    pub fn job(&self, job_id: &str) -> Result<JobEnvelope> {
        let jobs = self.inner.jobs.lock().expect("job table");
        jobs.get(job_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(job_id.to_string()))
    }

    /// Snapshot of the whole job table, ordered by id.
    pub fn jobs(&self) -> Vec<JobEnvelope> {
        self.inner.jobs.lock().expect("job table").values().cloned().collect()
    }

    pub fn queue_depth(&self) -> usize {
        self.inner.tx.max_capacity() - self.inner.tx.capacity()
    }

    pub fn health(&self) -> HealthResponse {
        HealthResponse {
            status: "ok".into(),
            workers: self.inner.config.worker_count,
            queue_depth: self.queue_depth(),
        }
    }

    /// One row per modality with recorded latencies. Latency is the mean of
    /// the last `window` successful jobs; MACs are counted at the model's
    /// configured sequence length.
    pub fn build_metrics_report(&self, window: usize) -> MetricsReport {
        let inner = &self.inner;
        let latencies = inner.latencies.lock().expect("latency window");
        let rows = latencies
            .active()
            .map(|m| {
                let (accuracy, macs) = match inner.engine.classifier(m) {
                    Some(c) => (c.eval_accuracy, c.model.config().count_macs(c.model.config().max_len)),
                    None => (None, 0),
                };
                let task = inner.engine.labels_for(m).task_kind().label();
                metrics_row(m, accuracy, macs, task, &latencies.recent(m, window))
            })
            .collect();
        MetricsReport { rows }
    }

    pub fn metrics(&self) -> MetricsReport {
        self.build_metrics_report(self.inner.config.metrics_window)
    }

    /// Late fusion of finished classification jobs. Without explicit weights
    /// each job is weighted by its modality's last evaluation accuracy.
    pub fn fuse(&self, req: &FuseRequest) -> Result<FuseResponse> {
        let envs = req.job_ids.iter().map(|id| self.job(id)).collect::<Result<Vec<_>>>()?;
        let first = envs
            .first()
            .ok_or_else(|| ServiceError::NotFusable("no job ids given".into()))?;
        let weights = match &req.weights {
            Some(w) if w.len() != envs.len() => {
                return Err(ServiceError::NotFusable(format!(
                    "{} weights for {} jobs",
                    w.len(),
                    envs.len()
                )))
            }
            Some(w) => w.clone(),
            None => {
                let accuracies: Vec<f64> = envs
                    .iter()
                    .map(|e| {
                        self.inner
                            .engine
                            .classifier(e.modality)
                            .and_then(|c| c.eval_accuracy)
                            .unwrap_or(0.0)
                    })
                    .collect();
                accuracy_weights(&accuracies)?
            }
        };
        let mut posteriors = Vec::with_capacity(envs.len());
        for (env, &weight) in envs.iter().zip(&weights) {
            match (&env.status, &env.result) {
                (JobStatus::Succeeded, Some(JobResult::Classification { distribution, .. })) => {
                    posteriors.push(ModalityPosterior {
                        modality: env.modality,
                        distribution: distribution.clone(),
                        weight,
                    })
                }
                _ => {
                    return Err(ServiceError::NotFusable(format!(
                        "job {} is not a finished classification",
                        env.job_id
                    )))
                }
            }
        }
        let fused = fuse_late(&posteriors)?;
        let labels = self.inner.engine.labels_for(first.modality);
        Ok(FuseResponse {
            class_index: fused.class_index,
            class_name: labels
                .class_names()
                .get(fused.class_index)
                .cloned()
                .unwrap_or_else(|| fused.class_index.to_string()),
            distribution: fused.distribution,
            weights,
        })
    }

    pub fn feedback_accuracy(&self, modality: Modality) -> Option<f64> {
        self.inner
            .feedback
            .lock()
            .expect("feedback")
            .get(&modality)
            .and_then(|f| f.accuracy())
    }
}

fn enqueue(inner: &Arc<Inner>, modality: Modality, kind: JobKind, digest: String, work: Work) -> Result<String> {
    let permit = inner.tx.try_reserve().map_err(|e| match e {
        mpsc::error::TrySendError::Full(()) => ServiceError::QueueFull {
            capacity: inner.config.queue_capacity,
        },
        mpsc::error::TrySendError::Closed(()) => ServiceError::ShuttingDown,
    })?;
    let counter = inner.counter.fetch_add(1, Ordering::SeqCst) + 1;
    let job_id = format_job_id(counter, rand::rng().random());
    let env = JobEnvelope::queued(job_id.clone(), kind, modality, digest, inner.clock.now_us());
    if let Some(log) = &inner.log {
        log.lock().expect("job log").append(&JobLogEntry::snapshot(&env))?;
    }
    inner.jobs.lock().expect("job table").insert(job_id.clone(), env);
    permit.send(QueuedJob {
        job_id: job_id.clone(),
        modality,
        work,
    });
    Ok(job_id)
}

/// Applies `step` to a copy of the envelope, logs the result, then publishes
/// it. A log failure is reported but does not hold the job back.
fn transition(
    inner: &Inner,
    job_id: &str,
    step: impl FnOnce(&mut JobEnvelope) -> itsgw_core::Result<()>,
) -> Result<JobEnvelope> {
    let mut env = inner
        .jobs
        .lock()
        .expect("job table")
        .get(job_id)
        .cloned()
        .ok_or_else(|| ServiceError::NotFound(job_id.to_string()))?;
    step(&mut env)?;
    if let Some(log) = &inner.log {
        if let Err(e) = log.lock().expect("job log").append(&JobLogEntry::snapshot(&env)) {
            tracing::error!(job = job_id, error = %e, "job log append failed");
        }
    }
    inner
        .jobs
        .lock()
        .expect("job table")
        .insert(job_id.to_string(), env.clone());
    Ok(env)
}

async fn execute(inner: &Arc<Inner>, job: QueuedJob) {
    let dequeued = Instant::now();
    if let Err(e) = transition(inner, &job.job_id, |env| env.start(inner.clock.now_us())) {
        tracing::error!(job = %job.job_id, error = %e, "cannot start job");
        return;
    }
    let (job_id, modality) = (job.job_id.clone(), job.modality);
    let label = match &job.work {
        Work::Infer { label, .. } => *label,
        Work::Retrain { .. } => None,
    };
    let is_inference = matches!(job.work, Work::Infer { .. });
    let worker_inner = inner.clone();
    let outcome = tokio::task::spawn_blocking(move || match &job.work {
        Work::Infer { input, params, .. } => worker_inner.engine.infer(input, params),
        Work::Retrain { window_accuracy } => worker_inner.engine.retrain(job.modality, *window_accuracy, &job.job_id),
    })
    .await
    .unwrap_or_else(|e| Err(JobError::new("internal", format!("worker task failed: {e}"))));

    let correct = match (&outcome, label) {
        (Ok(JobResult::Classification { class_index, .. }), Some(l)) => Some(*class_index == l),
        _ => None,
    };
    let succeeded = outcome.is_ok();
    let finished = transition(inner, &job_id, |env| {
        let now = inner.clock.now_us();
        let latency_ms = if inner.config.latency_includes_queue {
            now.saturating_sub(env.submitted_at_us) as f64 / 1000.0
        } else {
            dequeued.elapsed().as_secs_f64() * 1000.0
        };
        env.finish(now, outcome, latency_ms)
    });
    let env = match finished {
        Ok(env) => env,
        Err(e) => {
            tracing::error!(job = %job_id, error = %e, "cannot finish job");
            return;
        }
    };
    if is_inference && succeeded {
        if let Some(latency) = env.latency_ms {
            inner
                .latencies
                .lock()
                .expect("latency window")
                .record(modality, latency);
        }
    }
    if let Some(correct) = correct {
        if let Some(event) = record_feedback(inner, modality, correct) {
            schedule_retrain(inner, event);
        }
    }
}

fn record_feedback(inner: &Inner, modality: Modality, correct: bool) -> Option<RetrainEvent> {
    let mut states = inner.feedback.lock().expect("feedback");
    let state = states.entry(modality).or_insert_with(|| {
        FeedbackState::new(modality, inner.config.feedback_window, inner.config.feedback_threshold)
            .expect("validated config")
    });
    let event = state.update(correct);
    if event.is_some() {
        state.reset();
    }
    event
}

fn schedule_retrain(inner: &Arc<Inner>, event: RetrainEvent) {
    for &modality in &event.modalities {
        let digest = format!("retrain:{modality}:{:.4}", event.window_accuracy);
        let work = Work::Retrain {
            window_accuracy: event.window_accuracy,
        };
        match enqueue(inner, modality, JobKind::Retrain, digest, work) {
            Ok(id) => tracing::info!(job = %id, %modality, accuracy = event.window_accuracy, "retrain scheduled"),
            Err(e) => tracing::warn!(%modality, error = %e, "retrain event dropped"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_ordered_and_parse_back() {
        assert_eq!(format_job_id(7, 0xbeef), "j00000007-0000beef");
        assert_eq!(job_counter("j00000007-0000beef"), Some(7));
        assert!(format_job_id(9, 0) < format_job_id(10, 0));
    }

    #[test]
    fn clock_never_goes_back() {
        let far = SystemTime::now().duration_since(UNIX_EPOCH).unwrap().as_micros() as u64 + 10_000_000;
        let clock = Clock::starting_at(far);
        assert!(clock.now_us() >= far);
        let mut last = 0;
        for _ in 0..1000 {
            let t = clock.now_us();
            assert!(t >= last);
            last = t;
        }
    }

    #[test]
    fn digest_depends_on_content() {
        let a = payload_digest(&Payload::inline(b"a"));
        assert!(a.starts_with("sha256:") && a.len() == 7 + 64);
        assert_eq!(a, payload_digest(&Payload::inline(b"a")));
        assert_ne!(a, payload_digest(&Payload::inline(b"b")));
    }
}
