//! Frame sampling and the caption → refine chain.
//!
//! Frames arrive as binary PGM (`P5`, maxval 255) files. A deterministic
//! built-in captioner describes each sampled frame from simple pixel
//! statistics; the refiner then condenses the captions. External backends
//! (see [`crate::protocol`]) can replace both steps.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameSequence, GrayImage};

/// Parses a binary PGM image with maxval 255.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    parse_pgm_prefix(bytes).map(|(img, _)| img)
}

/// Parses one PGM image from the front of `bytes`, returning it with the
/// number of bytes consumed.
pub fn parse_pgm_prefix(bytes: &[u8]) -> Result<(GrayImage, usize)> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::InvalidImage("missing P5 magic".into()));
    }
    let mut pos = 2;
    let mut header = [0usize; 3];
    for slot in header.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *slot = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidImage("malformed PGM header".into()))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(Error::InvalidImage(format!("maxval {maxval} is not 255")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::InvalidImage("malformed PGM header".into()));
    }
    pos += 1;
    let end = pos + width * height;
    let pixels = bytes
        .get(pos..end)
        .ok_or_else(|| Error::InvalidImage("truncated PGM pixel data".into()))?;
    Ok((GrayImage::new(width, height, pixels.to_vec())?, end))
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

/// Loads every `*.pgm` file in `dir`; lexicographic file order is temporal
/// order.
pub fn load_frame_dir(dir: &Path) -> Result<FrameSequence> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    let frames = paths
        .iter()
        .map(|p| parse_pgm(&std::fs::read(p)?))
        .collect::<Result<Vec<_>>>()?;
    let source_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    FrameSequence::new(frames, source_id)
}

/// Indices `0, stride, 2·stride, …`, at most `max_frames` of them.
pub fn sample_frames(seq: &FrameSequence, stride: usize, max_frames: usize) -> Result<Vec<usize>> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    if stride == 0 || max_frames == 0 {
        return Err(Error::InvalidInput("stride and max_frames must be at least 1".into()));
    }
    Ok((0..seq.len()).step_by(stride).take(max_frames).collect())
}

/// `"a <tone> scene with <contrast> contrast"` from the mean intensity and the
/// mean absolute difference between horizontal neighbours.
pub fn builtin_caption(image: &GrayImage) -> Result<String> {
    let (w, h) = (image.width(), image.height());
    if w < 8 || h < 8 {
        return Err(Error::ImageTooSmall { width: w, height: h });
    }
    let px = image.pixels();
    let mean = px.iter().map(|&p| p as f64).sum::<f64>() / px.len() as f64;
    let mut diff_sum = 0u64;
    for row in px.chunks_exact(w) {
        diff_sum += row.windows(2).map(|p| p[0].abs_diff(p[1]) as u64).sum::<u64>();
    }
    let neighbor_diff = diff_sum as f64 / (h * (w - 1)) as f64;
    let tone = if mean < 85.0 {
        "dark"
    } else if mean < 170.0 {
        "dim"
    } else {
        "bright"
    };
    let contrast = if neighbor_diff > 16.0 { "high" } else { "low" };
    Ok(format!("a {tone} scene with {contrast} contrast"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RefineTask {
    #[default]
    Summarize,
    TranslatePassthrough,
}

impl RefineTask {
    pub fn as_str(self) -> &'static str {
        match self {
            RefineTask::Summarize => "summarize",
            RefineTask::TranslatePassthrough => "translate_passthrough",
        }
    }
}

impl std::str::FromStr for RefineTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "summarize" => Ok(RefineTask::Summarize),
            "translate_passthrough" | "translate" => Ok(RefineTask::TranslatePassthrough),
            other => Err(Error::InvalidInput(format!("unknown refine task `{other}`"))),
        }
    }
}

pub const SUMMARY_PREFIX: &str = "summary: ";
pub const CAPTION_JOIN: &str = "; ";

pub fn builtin_refine(captions: &[String], task: RefineTask) -> Result<String> {
    if captions.is_empty() {
        return Err(Error::EmptyCaptionList);
    }
    match task {
        RefineTask::Summarize => {
            let mut kept: Vec<&str> = Vec::with_capacity(captions.len());
            for c in captions {
                if kept.last() != Some(&c.as_str()) {
                    kept.push(c);
                }
            }
            Ok(format!("{SUMMARY_PREFIX}{}", kept.join(CAPTION_JOIN)))
        }
        RefineTask::TranslatePassthrough => Ok(captions.join(CAPTION_JOIN)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Builtin,
    External,
}

/// Capability descriptor of a captioner/refiner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionerDescriptor {
    pub name: String,
    pub kind: BackendKind,
    pub deterministic: bool,
}

/// Image → caption plus caption list → refined text.
pub trait CaptionBackend {
    fn descriptor(&self) -> CaptionerDescriptor;

    fn caption_frames(&mut self, frames: &[&GrayImage]) -> Result<Vec<String>>;

    fn refine(&mut self, captions: &[String], task: RefineTask) -> Result<String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinCaptioner;

impl CaptionBackend for BuiltinCaptioner {
    fn descriptor(&self) -> CaptionerDescriptor {
        CaptionerDescriptor {
            name: "builtin".into(),
            kind: BackendKind::Builtin,
            deterministic: true,
        }
    }

    fn caption_frames(&mut self, frames: &[&GrayImage]) -> Result<Vec<String>> {
        frames.iter().map(|f| builtin_caption(f)).collect()
    }

    fn refine(&mut self, captions: &[String], task: RefineTask) -> Result<String> {
        builtin_refine(captions, task)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Builtin,
    External {
        backend: String,
        deterministic: bool,
    },
    /// The external backend timed out and the built-in chain produced the
    /// result instead.
    BuiltinFallback {
        backend: String,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCaption {
    pub frame_index: usize,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionChainResult {
    pub source_id: String,
    pub captions: Vec<FrameCaption>,
    pub refined_text: String,
    pub task: RefineTask,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainOptions {
    pub task: RefineTask,
    pub stride: usize,
    pub max_frames: usize,
    pub fallback_to_builtin: bool,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self {
            task: RefineTask::Summarize,
            stride: 1,
            max_frames: 16,
            fallback_to_builtin: true,
        }
    }
}

fn chain_with(
    seq: &FrameSequence,
    indices: &[usize],
    backend: &mut dyn CaptionBackend,
    task: RefineTask,
) -> Result<(Vec<FrameCaption>, String)> {
    let frames: Vec<&GrayImage> = indices.iter().map(|&i| &seq.frames()[i]).collect();
    let captions = backend.caption_frames(&frames)?;
    if captions.len() != frames.len() {
        return Err(Error::BackendProtocolError(format!(
            "{} captions for {} frames",
            captions.len(),
            frames.len()
        )));
    }
    let refined = backend.refine(&captions, task)?;
    if refined.is_empty() {
        return Err(Error::BackendProtocolError("empty refined text".into()));
    }
    let per_frame = indices
        .iter()
        .zip(captions)
        .map(|(&frame_index, caption)| FrameCaption { frame_index, caption })
        .collect();
    Ok((per_frame, refined))
}

/// Samples frames, captions each, refines the captions, and records which
/// backend produced the result.
pub fn run_caption_chain(
    seq: &FrameSequence,
    backend: &mut dyn CaptionBackend,
    options: &ChainOptions,
) -> Result<CaptionChainResult> {
    let indices = sample_frames(seq, options.stride, options.max_frames)?;
    let descriptor = backend.descriptor();
    let (captions, refined_text, provenance) = match chain_with(seq, &indices, backend, options.task) {
        Ok((captions, refined)) => {
            let provenance = match descriptor.kind {
                BackendKind::Builtin => Provenance::Builtin,
                BackendKind::External => Provenance::External {
                    backend: descriptor.name.clone(),
                    deterministic: descriptor.deterministic,
                },
            };
            (captions, refined, provenance)
        }
        Err(err @ Error::BackendTimeout(_))
            if options.fallback_to_builtin && descriptor.kind == BackendKind::External =>
        {
            tracing::warn!(backend = %descriptor.name, error = %err, "falling back to builtin captioner");
            let (captions, refined) = chain_with(seq, &indices, &mut BuiltinCaptioner, options.task)?;
            let provenance = Provenance::BuiltinFallback {
                backend: descriptor.name.clone(),
                reason: err.to_string(),
            };
            (captions, refined, provenance)
        }
        Err(err) => return Err(err),
    };
    Ok(CaptionChainResult {
        source_id: seq.source_id().to_string(),
        captions,
        refined_text,
        task: options.task,
        provenance,
    })
}
