//! File formats for labeled data and small synthetic generators.
//!
//! Tabular data is CSV with a header row; an optional `label` column holds a
//! class name or index. Audio datasets are CSV manifests of `path,label`
//! rows with paths relative to the manifest. Frame streams are binary PGM
//! images concatenated back to back.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{encode_wav, load_wav};
use crate::error::{Error, Result};
use crate::model::{
    validate_record, AudioClip, FieldKind, FieldSpec, FieldValue, FrameSequence, LabelSchema, SensorRecord,
    AUDIO_SAMPLE_RATE_HZ,
};
use crate::visual::parse_pgm_prefix;

pub const LABEL_COLUMN: &str = "label";

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidInput(format!("CSV: {e}"))
}

/// Parses tabular records. Field kinds come from the first data row: values
/// that parse as numbers make the column numeric.
pub fn parse_tabular_csv(text: &str, labels: &LabelSchema) -> Result<Vec<SensorRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    let label_col = header.iter().position(|h| h.eq_ignore_ascii_case(LABEL_COLUMN));
    let mut schema: Option<Vec<FieldSpec>> = None;
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let mut values = Vec::new();
        let mut label = None;
        for (i, cell) in row.iter().enumerate() {
            if Some(i) == label_col {
                if !cell.is_empty() {
                    label = Some(labels.resolve(cell)?);
                }
                continue;
            }
            values.push(match cell.parse::<f64>() {
                Ok(v) => FieldValue::Numeric(v),
                Err(_) => FieldValue::Categorical(cell.to_string()),
            });
        }
        let expected = schema.get_or_insert_with(|| {
            header
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != label_col)
                .zip(&values)
                .map(|((_, name), v)| match v.kind() {
                    FieldKind::Numeric => FieldSpec::numeric(name.as_str()),
                    FieldKind::Categorical => FieldSpec::categorical(name.as_str()),
                })
                .collect()
        });
        let declared: Vec<FieldSpec> = expected
            .iter()
            .zip(&values)
            .map(|(spec, v)| FieldSpec {
                name: spec.name.clone(),
                kind: v.kind(),
            })
            .collect();
        let record = SensorRecord::new(declared, values, label);
        validate_record(expected, &record, labels.len())?;
        records.push(record);
    }
    Ok(records)
}

pub fn load_tabular_csv(path: &Path, labels: &LabelSchema) -> Result<Vec<SensorRecord>> {
    parse_tabular_csv(&std::fs::read_to_string(path)?, labels)
}

/// Inverse of [`parse_tabular_csv`]; labels are written by class name.
pub fn write_tabular_csv(records: &[SensorRecord], labels: &LabelSchema) -> Result<String> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let mut writer = csv::Writer::from_writer(Vec::new());
    let with_label = records.iter().any(|r| r.label.is_some());
    let mut header: Vec<&str> = first.schema.iter().map(|f| f.name.as_str()).collect();
    if with_label {
        header.push(LABEL_COLUMN);
    }
    writer.write_record(&header).map_err(csv_error)?;
    for r in records {
        let mut row: Vec<String> = r
            .values
            .iter()
            .map(|v| match v {
                FieldValue::Numeric(x) => x.to_string(),
                FieldValue::Categorical(s) => s.clone(),
            })
            .collect();
        if with_label {
            row.push(match r.label {
                Some(l) => labels.class_names().get(l).cloned().unwrap_or_else(|| l.to_string()),
                None => String::new(),
            });
        }
        writer.write_record(&row).map_err(csv_error)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 strings"))
}

/// Reads a `path,label` manifest; relative paths resolve against the
/// manifest's directory.
pub fn load_audio_manifest(path: &Path, labels: &LabelSchema) -> Result<Vec<AudioClip>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let mut clips = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let file = row
            .get(0)
            .ok_or_else(|| Error::InvalidInput("manifest row without path".into()))?;
        let mut clip = load_wav(&std::fs::read(base.join(file))?)?;
        clip.label = match row.get(1).filter(|l| !l.is_empty()) {
            Some(l) => Some(labels.resolve(l)?),
            None => None,
        };
        clips.push(clip);
    }
    Ok(clips)
}

/// Splits back-to-back binary PGM images into a frame sequence.
pub fn frames_from_pgm_stream(bytes: &[u8], source_id: &str) -> Result<FrameSequence> {
    let mut frames = Vec::new();
    let mut rest = bytes;
    while !rest.iter().all(u8::is_ascii_whitespace) {
        let start = rest.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(0);
        let (img, used) = parse_pgm_prefix(&rest[start..])?;
        frames.push(img);
        rest = &rest[start + used..];
    }
    FrameSequence::new(frames, source_id)
}

/// Two-class schema for the synthetic speed set.
pub fn speed_labels() -> LabelSchema {
    LabelSchema::classification(["normal", "speeding"]).expect("two distinct names")
}

/// Separable tabular set: `speed_kph` uniform in [0, 120) with one decimal
/// and a noise field `tire_pressure_psi`; class 1 iff speed > 60.
pub fn synthetic_speed_records(n: usize, seed: u64) -> Vec<SensorRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = vec![FieldSpec::numeric("speed_kph"), FieldSpec::numeric("tire_pressure_psi")];
    (0..n)
        .map(|_| {
            let speed = (rng.random_range(0.0..120.0f64) * 10.0).round() / 10.0;
            let pressure = (rng.random_range(28.0..36.0f64) * 10.0).round() / 10.0;
            SensorRecord::new(
                schema.clone(),
                vec![FieldValue::Numeric(speed), FieldValue::Numeric(pressure)],
                Some(usize::from(speed > 60.0)),
            )
        })
        .collect()
}

/// Sine tone at `freq_hz` with the given amplitude, 16 kHz.
pub fn tone(freq_hz: f64, samples: usize, amplitude: f64) -> Vec<i16> {
    (0..samples)
        .map(|i| (amplitude * (2.0 * PI * freq_hz * i as f64 / AUDIO_SAMPLE_RATE_HZ as f64).sin()) as i16)
        .collect()
}

/// Noisy tones whose class is the pitch band: 0 below 1 kHz, 1 above 2 kHz.
/// Lengths vary between 0.1 s and 0.3 s.
pub fn synthetic_tone_clips(n: usize, seed: u64) -> Vec<AudioClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let label = rng.random_range(0..2usize);
            let freq = if label == 0 {
                rng.random_range(200.0..1000.0)
            } else {
                rng.random_range(2000.0..4000.0)
            };
            let len = rng.random_range(1600..4800);
            let mut samples = tone(freq, len, rng.random_range(3000.0..12000.0));
            for s in &mut samples {
                *s = s.saturating_add(rng.random_range(-500..500));
            }
            AudioClip {
                samples,
                sample_rate_hz: AUDIO_SAMPLE_RATE_HZ,
                label: Some(label),
            }
        })
        .collect()
}

/// Writes clips as WAV files plus a manifest; returns the manifest path.
pub fn write_audio_dataset(dir: &Path, clips: &[AudioClip], labels: &LabelSchema) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::from("path,label\n");
    for (i, clip) in clips.iter().enumerate() {
        let name = format!("clip{i:05}.wav");
        std::fs::write(dir.join(&name), encode_wav(&clip.samples, clip.sample_rate_hz, 1))?;
        let label = clip
            .label
            .and_then(|l| labels.class_names().get(l).cloned())
            .unwrap_or_default();
        manifest.push_str(&format!("{name},{label}\n"));
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, manifest)?;
    Ok(path)
}
