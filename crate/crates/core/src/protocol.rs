//! NDJSON wire protocol for external caption/refine backends.
//!
//! Each message is one JSON object per line, tagged by `"type"`. Both sides
//! open with a `hello`; the backend's hello carries its capabilities, an
//! optional model id and whether it samples nondeterministically. Requests
//! carry unique integer ids and responses may arrive in any order.
//!
//! A backend is reached either through a child process's standard streams or
//! over TCP. [`run_conformance`] exercises a backend against the protocol
//! contract; [`serve`] speaks the backend side using the built-in captioner.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GrayImage;
use crate::visual::{
    builtin_caption, builtin_refine, encode_pgm, parse_pgm, BackendKind, CaptionBackend, CaptionerDescriptor,
    RefineTask,
};

pub const PROTOCOL_VERSION: u32 = 1;
pub const CAP_CAPTION: &str = "caption";
pub const CAP_REFINE: &str = "refine";

fn version() -> u32 {
    PROTOCOL_VERSION
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Frame {
    Hello {
        #[serde(default = "version")]
        v: u32,
        #[serde(default)]
        capabilities: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model_id: Option<String>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        nondeterministic: bool,
    },
    CaptionReq {
        #[serde(default = "version")]
        v: u32,
        id: u64,
        image_pgm_b64: String,
    },
    CaptionRes {
        id: u64,
        caption: String,
    },
    RefineReq {
        #[serde(default = "version")]
        v: u32,
        id: u64,
        task: RefineTask,
        captions: Vec<String>,
    },
    RefineRes {
        id: u64,
        text: String,
    },
    Err {
        #[serde(default)]
        id: Option<u64>,
        code: String,
        message: String,
    },
}

impl Frame {
    pub fn hello(capabilities: &[&str]) -> Self {
        Frame::Hello {
            v: PROTOCOL_VERSION,
            capabilities: capabilities.iter().map(|c| c.to_string()).collect(),
            model_id: None,
            nondeterministic: false,
        }
    }

    pub fn caption_req(id: u64, image: &GrayImage) -> Self {
        Frame::CaptionReq {
            v: PROTOCOL_VERSION,
            id,
            image_pgm_b64: B64.encode(encode_pgm(image)),
        }
    }

    pub fn refine_req(id: u64, task: RefineTask, captions: Vec<String>) -> Self {
        Frame::RefineReq {
            v: PROTOCOL_VERSION,
            id,
            task,
            captions,
        }
    }

    /// Id of a response frame.
    pub fn response_id(&self) -> Option<u64> {
        match self {
            Frame::CaptionRes { id, .. } | Frame::RefineRes { id, .. } => Some(*id),
            Frame::Err { id, .. } => *id,
            _ => None,
        }
    }

    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("frames always serialize");
        line.push('\n');
        line
    }
}

/// What the reader thread observed on the incoming stream.
#[derive(Debug)]
pub enum Incoming {
    Frame(Frame),
    Malformed(String),
    Closed,
}

enum Sink {
    Child(ChildStdin),
    Tcp(TcpStream),
}

/// One open transport to a backend: a line writer plus a reader thread that
/// forwards parsed frames over a channel.
pub struct Connection {
    sink: Option<Sink>,
    incoming: Receiver<Incoming>,
    child: Option<Child>,
    label: String,
}

fn spawn_reader<R: std::io::Read + Send + 'static>(source: R) -> Receiver<Incoming> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(source);
        let mut line = String::new();
        loop {
            line.clear();
            match reader.read_line(&mut line) {
                Ok(0) | Err(_) => {
                    let _ = tx.send(Incoming::Closed);
                    return;
                }
                Ok(_) => {
                    let trimmed = line.trim();
                    if trimmed.is_empty() {
                        continue;
                    }
                    let msg = match serde_json::from_str::<Frame>(trimmed) {
                        Ok(frame) => Incoming::Frame(frame),
                        Err(_) => Incoming::Malformed(trimmed.to_string()),
                    };
                    if tx.send(msg).is_err() {
                        return;
                    }
                }
            }
        }
    });
    rx
}

impl Connection {
    /// Spawns `command` through the shell with piped stdin/stdout.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self {
            sink: Some(Sink::Child(stdin)),
            incoming: spawn_reader(stdout),
            child: Some(child),
            label: command.to_string(),
        })
    }

    pub fn connect_tcp(addr: &str) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self {
            sink: Some(Sink::Tcp(stream)),
            incoming: spawn_reader(reader),
            child: None,
            label: format!("tcp://{addr}"),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn send_raw(&mut self, line: &str) -> Result<()> {
        let res = match self.sink.as_mut() {
            Some(Sink::Child(w)) => w.write_all(line.as_bytes()).and_then(|_| w.flush()),
            Some(Sink::Tcp(w)) => w.write_all(line.as_bytes()).and_then(|_| w.flush()),
            None => return Err(Error::BackendProtocolError("connection already closed".into())),
        };
        res.map_err(|e| Error::BackendProtocolError(format!("write failed: {e}")))
    }

    pub fn send(&mut self, frame: &Frame) -> Result<()> {
        self.send_raw(&frame.to_line())
    }

    /// Waits for the next incoming message until `deadline`; `None` on
    /// timeout.
    pub fn recv_until(&self, deadline: Instant) -> Option<Incoming> {
        let wait = deadline.saturating_duration_since(Instant::now());
        match self.incoming.recv_timeout(wait) {
            Ok(msg) => Some(msg),
            Err(RecvTimeoutError::Timeout) => None,
            Err(RecvTimeoutError::Disconnected) => Some(Incoming::Closed),
        }
    }

    /// Closes the write half so the backend sees end-of-stream.
    pub fn close_write(&mut self) {
        match self.sink.take() {
            Some(Sink::Tcp(s)) => {
                let _ = s.shutdown(Shutdown::Write);
            }
            Some(Sink::Child(s)) => drop(s),
            None => {}
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        self.close_write();
        if let Some(mut child) = self.child.take() {
            let deadline = Instant::now() + Duration::from_millis(500);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => return,
                    Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                    _ => break,
                }
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Where an external backend lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendEndpoint {
    Command(String),
    Tcp(String),
}

impl BackendEndpoint {
    pub fn open(&self) -> Result<Connection> {
        match self {
            BackendEndpoint::Command(cmd) => Connection::spawn(cmd),
            BackendEndpoint::Tcp(addr) => Connection::connect_tcp(addr),
        }
    }
}

/// The backend's side of the handshake.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendHello {
    pub capabilities: Vec<String>,
    pub model_id: Option<String>,
    pub nondeterministic: bool,
}

impl BackendHello {
    pub fn supports(&self, capability: &str) -> bool {
        self.capabilities.iter().any(|c| c == capability)
    }
}

fn await_hello(conn: &Connection, timeout: Duration) -> Result<BackendHello> {
    let timeout_ms = timeout.as_millis() as u64;
    let deadline = Instant::now() + timeout;
    match conn.recv_until(deadline) {
        None => Err(Error::BackendTimeout(timeout_ms)),
        Some(Incoming::Frame(Frame::Hello {
            v,
            capabilities,
            model_id,
            nondeterministic,
        })) => {
            if v != PROTOCOL_VERSION {
                return Err(Error::BackendProtocolError(format!("unsupported protocol version {v}")));
            }
            Ok(BackendHello {
                capabilities,
                model_id,
                nondeterministic,
            })
        }
        Some(Incoming::Closed) => Err(Error::BackendProtocolError("backend closed before hello".into())),
        Some(Incoming::Frame(other)) => Err(Error::BackendProtocolError(format!("expected hello, got {other:?}"))),
        Some(Incoming::Malformed(line)) => Err(Error::BackendProtocolError(format!("malformed hello line: {line}"))),
    }
}

/// A caption/refine backend reached over the wire protocol. Requests are
/// issued one at a time; stray responses to earlier (timed-out) ids are
/// discarded.
pub struct ExternalBackend {
    conn: Connection,
    hello: BackendHello,
    next_id: u64,
    timeout: Duration,
    buffered: HashMap<u64, Frame>,
}

impl ExternalBackend {
    pub fn connect(endpoint: &BackendEndpoint, timeout: Duration) -> Result<Self> {
        if timeout.is_zero() {
            return Err(Error::InvalidConfig("backend timeout must be positive".into()));
        }
        let mut conn = endpoint.open()?;
        conn.send(&Frame::hello(&[CAP_CAPTION, CAP_REFINE]))?;
        let hello = await_hello(&conn, timeout)?;
        if !hello.supports(CAP_CAPTION) {
            return Err(Error::BackendProtocolError(format!(
                "backend {} does not offer the caption capability",
                conn.label()
            )));
        }
        Ok(Self {
            conn,
            hello,
            next_id: 1,
            timeout,
            buffered: HashMap::new(),
        })
    }

    pub fn hello(&self) -> &BackendHello {
        &self.hello
    }

    fn request(&mut self, build: impl FnOnce(u64) -> Frame) -> Result<Frame> {
        let id = self.next_id;
        self.next_id += 1;
        self.conn.send(&build(id))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            if let Some(frame) = self.buffered.remove(&id) {
                return check_response(frame);
            }
            match self.conn.recv_until(deadline) {
                None => return Err(Error::BackendTimeout(self.timeout.as_millis() as u64)),
                Some(Incoming::Frame(frame)) => match frame.response_id() {
                    Some(rid) if rid == id => return check_response(frame),
                    Some(rid) if rid > id => {
                        self.buffered.insert(rid, frame);
                    }
                    Some(_) => {}
                    None => {
                        if let Frame::Err { code, message, .. } = frame {
                            tracing::warn!(%code, %message, "backend reported an error without id");
                        }
                    }
                },
                Some(Incoming::Malformed(line)) => {
                    return Err(Error::BackendProtocolError(format!("malformed response line: {line}")))
                }
                Some(Incoming::Closed) => return Err(Error::BackendProtocolError("backend closed the stream".into())),
            }
        }
    }
}

fn check_response(frame: Frame) -> Result<Frame> {
    match frame {
        Frame::Err { code, message, .. } => Err(Error::BackendProtocolError(format!("{code}: {message}"))),
        other => Ok(other),
    }
}

impl CaptionBackend for ExternalBackend {
    fn descriptor(&self) -> CaptionerDescriptor {
        CaptionerDescriptor {
            name: self
                .hello
                .model_id
                .clone()
                .unwrap_or_else(|| self.conn.label().to_string()),
            kind: BackendKind::External,
            deterministic: !self.hello.nondeterministic,
        }
    }

    fn caption_frames(&mut self, frames: &[&GrayImage]) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(frames.len());
        for frame in frames {
            match self.request(|id| Frame::caption_req(id, frame))? {
                Frame::CaptionRes { caption, .. } if !caption.is_empty() => out.push(caption),
                other => {
                    return Err(Error::BackendProtocolError(format!(
                        "expected a non-empty caption_res, got {other:?}"
                    )))
                }
            }
        }
        Ok(out)
    }

    /// Refinement is delegated when the backend offers it and done locally
    /// otherwise.
    fn refine(&mut self, captions: &[String], task: RefineTask) -> Result<String> {
        if captions.is_empty() {
            return Err(Error::EmptyCaptionList);
        }
        if !self.hello.supports(CAP_REFINE) {
            return builtin_refine(captions, task);
        }
        match self.request(|id| Frame::refine_req(id, task, captions.to_vec()))? {
            Frame::RefineRes { text, .. } => Ok(text),
            other => Err(Error::BackendProtocolError(format!(
                "expected refine_res, got {other:?}"
            ))),
        }
    }
}

/// Behaviour knobs for [`serve`].
#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    pub model_id: Option<String>,
    /// Answer each request after a random delay in `0..jitter_ms` on its own
    /// thread, so responses come back out of order.
    pub jitter_ms: u64,
    /// Read requests but never answer them.
    pub hang: bool,
}

fn handle_request(frame: Frame) -> Option<Frame> {
    let reply = match frame {
        Frame::Hello { .. } => return None,
        Frame::CaptionReq { id, image_pgm_b64, .. } => {
            let caption = B64
                .decode(image_pgm_b64.as_bytes())
                .map_err(|e| Error::InvalidImage(format!("bad base64: {e}")))
                .and_then(|bytes| parse_pgm(&bytes))
                .and_then(|img| builtin_caption(&img));
            match caption {
                Ok(caption) => Frame::CaptionRes { id, caption },
                Err(e) => bad_request(Some(id), &e.to_string()),
            }
        }
        Frame::RefineReq { id, task, captions, .. } => match builtin_refine(&captions, task) {
            Ok(text) => Frame::RefineRes { id, text },
            Err(e) => bad_request(Some(id), &e.to_string()),
        },
        other => bad_request(other.response_id(), "unexpected frame type"),
    };
    Some(reply)
}

fn bad_request(id: Option<u64>, message: &str) -> Frame {
    Frame::Err {
        id,
        code: "bad_request".into(),
        message: message.into(),
    }
}

/// Serves the backend side of the protocol with the built-in captioner until
/// end-of-stream. Malformed lines get an `err` frame and the session
/// continues.
pub fn serve<R: BufRead, W: Write + Send + 'static>(input: R, output: W, options: &ServeOptions) -> Result<()> {
    let output = Arc::new(Mutex::new(output));
    let write_line = |out: &Arc<Mutex<W>>, frame: &Frame| -> Result<()> {
        let mut w = out.lock().expect("writer lock");
        w.write_all(frame.to_line().as_bytes())?;
        w.flush()?;
        Ok(())
    };
    let hello = Frame::Hello {
        v: PROTOCOL_VERSION,
        capabilities: vec![CAP_CAPTION.into(), CAP_REFINE.into()],
        model_id: options.model_id.clone(),
        nondeterministic: false,
    };
    write_line(&output, &hello)?;

    let mut workers = Vec::new();
    for line in input.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let frame = match serde_json::from_str::<Frame>(trimmed) {
            Ok(frame) => frame,
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(trimmed)
                    .ok()
                    .and_then(|v| v.get("id").and_then(serde_json::Value::as_u64));
                write_line(&output, &bad_request(id, &format!("unparseable line: {e}")))?;
                continue;
            }
        };
        if options.hang {
            continue;
        }
        if options.jitter_ms == 0 {
            if let Some(reply) = handle_request(frame) {
                write_line(&output, &reply)?;
            }
        } else {
            let delay = rand::rng().random_range(0..options.jitter_ms);
            let out = Arc::clone(&output);
            workers.push(thread::spawn(move || {
                thread::sleep(Duration::from_millis(delay));
                if let Some(reply) = handle_request(frame) {
                    let mut w = out.lock().expect("writer lock");
                    let _ = w.write_all(reply.to_line().as_bytes()).and_then(|_| w.flush());
                }
            }));
        }
    }
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConformanceCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConformanceReport {
    pub checks: Vec<ConformanceCheck>,
    /// Whether any response arrived out of request order (informational).
    pub saw_reordering: bool,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    fn record(&mut self, name: &'static str, result: std::result::Result<String, String>) -> bool {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.checks.push(ConformanceCheck { name, passed, detail });
        passed
    }
}

pub const CONFORMANCE_REQUESTS: u64 = 50;

fn conformance_frame(i: u64) -> Frame {
    if i.is_multiple_of(2) {
        let value = ((i * 37) % 256) as u8;
        Frame::caption_req(i, &GrayImage::filled(8, 8, value))
    } else {
        let captions = vec!["a dark scene with low contrast".to_string(); 1 + (i as usize % 3)];
        Frame::refine_req(i, RefineTask::Summarize, captions)
    }
}

/// Checks a backend against the protocol contract: handshake, a burst of
/// interleaved caption/refine requests answered exactly once each (in any
/// order), recovery after a malformed line, and clean shutdown on
/// end-of-stream.
pub fn run_conformance(endpoint: &BackendEndpoint, timeout: Duration) -> Result<ConformanceReport> {
    let mut conn = endpoint.open()?;
    let mut report = ConformanceReport::default();

    conn.send(&Frame::hello(&[CAP_CAPTION, CAP_REFINE]))?;
    let hello = match await_hello(&conn, timeout) {
        Ok(h) => h,
        Err(e) => {
            report.record("handshake", Err(e.to_string()));
            return Ok(report);
        }
    };
    let handshake = if hello.supports(CAP_CAPTION) {
        Ok(format!("capabilities {:?}", hello.capabilities))
    } else {
        Err(format!("capabilities {:?} lack caption", hello.capabilities))
    };
    report.record("handshake", handshake);

    let ids: Vec<u64> = (1..=CONFORMANCE_REQUESTS).collect();
    for &id in &ids {
        conn.send(&conformance_frame(id))?;
    }
    let deadline = Instant::now() + timeout;
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    let mut problems = Vec::new();
    while seen.len() < ids.len() {
        match conn.recv_until(deadline) {
            None => {
                problems.push(format!("timed out with {} of {} responses", seen.len(), ids.len()));
                break;
            }
            Some(Incoming::Closed) => {
                problems.push("stream closed early".into());
                break;
            }
            Some(Incoming::Malformed(line)) => problems.push(format!("malformed response: {line}")),
            Some(Incoming::Frame(frame)) => {
                let Some(id) = frame.response_id() else {
                    problems.push(format!("response without id: {frame:?}"));
                    continue;
                };
                if !(1..=CONFORMANCE_REQUESTS).contains(&id) {
                    problems.push(format!("unknown id {id}"));
                    continue;
                }
                if !seen.insert(id) {
                    problems.push(format!("duplicate response for id {id}"));
                    continue;
                }
                order.push(id);
                let kind_ok = match (&frame, id % 2) {
                    (Frame::CaptionRes { caption, .. }, 0) => !caption.is_empty(),
                    (Frame::RefineRes { text, .. }, 1) => !text.is_empty(),
                    _ => false,
                };
                if !kind_ok {
                    problems.push(format!("wrong or empty response for id {id}: {frame:?}"));
                }
            }
        }
    }
    report.saw_reordering = order.windows(2).any(|w| w[0] > w[1]);
    let interleaved = if problems.is_empty() {
        Ok(format!(
            "{} responses, {}",
            order.len(),
            if report.saw_reordering {
                "out of order"
            } else {
                "in order"
            }
        ))
    } else {
        Err(problems.join("; "))
    };
    report.record("interleaved_requests", interleaved);

    conn.send_raw("{not json\n")?;
    let probe_id = CONFORMANCE_REQUESTS + 1;
    conn.send(&Frame::caption_req(probe_id, &GrayImage::filled(8, 8, 0)))?;
    let deadline = Instant::now() + timeout;
    let mut got_err = false;
    let mut recovered = false;
    while !recovered {
        match conn.recv_until(deadline) {
            Some(Incoming::Frame(Frame::Err { id: None, .. })) => got_err = true,
            Some(Incoming::Frame(f)) if f.response_id() == Some(probe_id) => {
                recovered = matches!(f, Frame::CaptionRes { .. });
                break;
            }
            Some(Incoming::Frame(_)) | Some(Incoming::Malformed(_)) => {}
            None | Some(Incoming::Closed) => break,
        }
    }
    let recovery = match (got_err, recovered) {
        (true, true) => Ok("err frame returned and session continued".into()),
        (false, true) => Err("no err frame for the malformed line".into()),
        _ => Err("session did not continue after a malformed line".into()),
    };
    report.record("malformed_line_recovery", recovery);

    conn.close_write();
    let deadline = Instant::now() + timeout;
    let shutdown = loop {
        match conn.recv_until(deadline) {
            Some(Incoming::Closed) => break Ok("stream closed after end-of-input".into()),
            Some(_) => continue,
            None => break Err("backend kept the stream open after end-of-input".into()),
        }
    };
    report.record("graceful_shutdown", shutdown);
    Ok(report)
}
