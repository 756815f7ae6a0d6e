//! Append-only job log and crash replay.
//!
//! One JSON object per line per state change. Terminal lines are synced to
//! disk before the transition is visible to pollers; queued and running lines
//! are not. On replay a malformed final line is a torn write and is dropped;
//! a malformed line anywhere else is corruption.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use itsgw_core::model::{JobEnvelope, JobError, JobKind, JobResult, JobStatus, Modality};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const INTERRUPTED: &str = "interrupted";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogEvent {
    Queued,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobLogEntry {
    pub job_id: String,
    pub event: LogEvent,
    pub timestamp_us: u64,
    pub kind: JobKind,
    pub modality: Modality,
    pub payload_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<JobResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<JobError>,
}

impl JobLogEntry {
    /// The line recording `env`'s current status.
    pub fn snapshot(env: &JobEnvelope) -> Self {
        let (event, ts) = match env.status {
            JobStatus::Queued => (LogEvent::Queued, env.submitted_at_us),
            JobStatus::Running => (LogEvent::Running, env.started_at_us.unwrap_or(env.submitted_at_us)),
            JobStatus::Succeeded => (LogEvent::Succeeded, env.finished_at_us.unwrap_or(env.submitted_at_us)),
            JobStatus::Failed => (LogEvent::Failed, env.finished_at_us.unwrap_or(env.submitted_at_us)),
        };
        let terminal = env.status.is_terminal();
        Self {
            job_id: env.job_id.clone(),
            event,
            timestamp_us: ts,
            kind: env.kind,
            modality: env.modality,
            payload_digest: env.payload_digest.clone(),
            latency_ms: if terminal { env.latency_ms } else { None },
            result: if terminal { env.result.clone() } else { None },
            error: if terminal { env.error.clone() } else { None },
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.event, LogEvent::Succeeded | LogEvent::Failed)
    }
}

/// Marks a job that never finished as failed{interrupted}.
pub fn interrupt(env: &mut JobEnvelope, at_us: u64) {
    let floor = env.started_at_us.unwrap_or(env.submitted_at_us);
    env.status = JobStatus::Failed;
    env.finished_at_us = Some(at_us.max(floor));
    env.latency_ms = None;
    env.result = None;
    env.error = Some(JobError::new(INTERRUPTED, "gateway stopped before the job finished"));
}

fn apply(jobs: &mut BTreeMap<String, JobEnvelope>, entry: JobLogEntry, line: usize) -> Result<()> {
    let corrupt = |reason: String| ServiceError::CorruptLog { line, reason };
    if entry.event == LogEvent::Queued {
        if jobs.contains_key(&entry.job_id) {
            return Err(corrupt(format!("job {} queued twice", entry.job_id)));
        }
        let env = JobEnvelope::queued(
            entry.job_id.clone(),
            entry.kind,
            entry.modality,
            entry.payload_digest,
            entry.timestamp_us,
        );
        jobs.insert(entry.job_id, env);
        return Ok(());
    }
    let env = jobs
        .get_mut(&entry.job_id)
        .ok_or_else(|| corrupt(format!("job {} was never queued", entry.job_id)))?;
    let step = match entry.event {
        LogEvent::Queued => unreachable!(),
        LogEvent::Running => env.start(entry.timestamp_us),
        LogEvent::Succeeded => {
            let result = entry
                .result
                .ok_or_else(|| corrupt("succeeded line without result".into()))?;
            env.finish(entry.timestamp_us, Ok(result), entry.latency_ms.unwrap_or(0.0))
        }
        LogEvent::Failed => {
            let error = entry.error.ok_or_else(|| corrupt("failed line without error".into()))?;
            if error.code == INTERRUPTED && !env.status.is_terminal() {
                interrupt(env, entry.timestamp_us);
                return Ok(());
            }
            env.finish(entry.timestamp_us, Err(error), entry.latency_ms.unwrap_or(0.0))
        }
    };
    step.map_err(|e| corrupt(e.to_string()))
}

/// Reconstructed job table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Replay {
    pub jobs: BTreeMap<String, JobEnvelope>,
    /// Jobs found queued or running; they are now failed{interrupted}.
    pub interrupted: Vec<String>,
    pub torn_tail: bool,
    pub last_timestamp_us: u64,
    /// Length of the intact prefix of the log.
    pub valid_len: usize,
}

pub fn replay_bytes(bytes: &[u8]) -> Result<Replay> {
    let mut replay = Replay::default();
    let mut offset = 0;
    let mut lines: Vec<(usize, &[u8])> = Vec::new();
    for chunk in bytes.split(|&b| b == b'\n') {
        lines.push((offset, chunk));
        offset += chunk.len() + 1;
    }
    let last_nonblank = lines.iter().rposition(|(_, l)| !l.trim_ascii().is_empty());
    for (n, &(start, raw)) in lines.iter().enumerate() {
        if raw.trim_ascii().is_empty() {
            continue;
        }
        match serde_json::from_slice::<JobLogEntry>(raw) {
            Ok(entry) => {
                replay.last_timestamp_us = replay.last_timestamp_us.max(entry.timestamp_us);
                apply(&mut replay.jobs, entry, n + 1)?;
                replay.valid_len = (start + raw.len() + 1).min(bytes.len());
            }
            Err(_) if Some(n) == last_nonblank => {
                replay.torn_tail = true;
                break;
            }
            Err(e) => {
                return Err(ServiceError::CorruptLog {
                    line: n + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    for env in replay.jobs.values_mut() {
        if !env.status.is_terminal() {
            interrupt(env, replay.last_timestamp_us);
            replay.interrupted.push(env.job_id.clone());
        }
    }
    Ok(replay)
}

/// Replays the log at `path`; a missing file is an empty log.
pub fn replay_log(path: &Path) -> Result<Replay> {
    match std::fs::read(path) {
        Ok(bytes) => replay_bytes(&bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Replay::default()),
        Err(e) => Err(e.into()),
    }
}

/// The single writer of the job log.
#[derive(Debug)]
pub struct JobLog {
    file: File,
    path: PathBuf,
}

impl JobLog {
    /// Replays the existing log, cuts off a torn tail, and opens the file for
    /// appending. Interrupted jobs get their failed line appended.
    pub fn open(path: &Path) -> Result<(Self, Replay)> {
        let replay = replay_log(path)?;
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(false)
            .open(path)?;
        file.set_len(replay.valid_len as u64)?;
        file.seek(SeekFrom::End(0))?;
        if replay.valid_len > 0 {
            let bytes = std::fs::read(path)?;
            if bytes.last() != Some(&b'\n') {
                file.write_all(b"\n")?;
            }
        }
        let mut log = Self {
            file,
            path: path.to_path_buf(),
        };
        for id in &replay.interrupted {
            log.append(&JobLogEntry::snapshot(&replay.jobs[id]))?;
        }
        log.file.sync_data()?;
        Ok((log, replay))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one line; terminal lines are synced before returning.
    pub fn append(&mut self, entry: &JobLogEntry) -> Result<()> {
        let mut line = serde_json::to_vec(entry).expect("log entries serialize");
        line.push(b'\n');
        self.file.write_all(&line)?;
        if entry.is_terminal() {
            self.file.sync_data()?;
        }
        Ok(())
    }
}
