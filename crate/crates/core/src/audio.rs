//! Audio front-end: WAV ingestion, clip normalization, radix-2 FFT,
//! log-magnitude spectrogram and length-sorted batch collation.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{AudioClip, AUDIO_SAMPLE_RATE_HZ};
use crate::tensor::Tensor;

pub const FRAME_LEN: usize = 400;
pub const HOP_LEN: usize = 160;
pub const FFT_SIZE: usize = 512;
pub const FEATURE_DIM: usize = FFT_SIZE / 2 + 1;
const LOG_FLOOR: f64 = 1e-10;
const NORM_EPS: f64 = 1e-7;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes a canonical RIFF/WAVE file holding 16 kHz mono PCM16.
pub fn load_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedHeader("missing RIFF/WAVE signature".into()));
    }
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::MalformedHeader(format!("chunk {:?} overruns file", String::from_utf8_lossy(id))))?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::MalformedHeader("fmt chunk shorter than 16 bytes".into()));
                }
                let b = &bytes[body_start..body_end];
                format = Some((u16_at(b, 0), u16_at(b, 2), u32_at(b, 4), u16_at(b, 14)));
            }
            b"data" => {
                let (code, channels, rate, bits) =
                    format.ok_or_else(|| Error::MalformedHeader("data chunk before fmt chunk".into()))?;
                if code != 1 {
                    return Err(Error::MalformedHeader(format!("format code {code} is not PCM")));
                }
                if channels != 1 {
                    return Err(Error::UnsupportedChannels(channels));
                }
                if bits != 16 {
                    return Err(Error::UnsupportedBitDepth(bits));
                }
                if rate != AUDIO_SAMPLE_RATE_HZ {
                    return Err(Error::UnsupportedRate(rate));
                }
                if !size.is_multiple_of(2) || size == 0 {
                    return Err(Error::MalformedHeader(format!("data chunk of {size} bytes")));
                }
                let samples = bytes[body_start..body_end]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]))
                    .collect();
                return Ok(AudioClip {
                    samples,
                    sample_rate_hz: rate,
                    label: None,
                });
            }
            _ => {}
        }
        pos = body_end + (size & 1);
    }
    Err(Error::MalformedHeader("no data chunk".into()))
}

/// Encodes PCM16 samples as a canonical 44-byte-header WAV file. Interleaved
/// samples are expected when `channels > 1`.
pub fn encode_wav(samples: &[i16], sample_rate_hz: u32, channels: u16) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(sample_rate_hz * channels as u32 * 2).to_le_bytes());
    out.extend_from_slice(&(channels * 2).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

/// Scales to [-1, 1) and standardizes: `(x/32768 − mean) / (std + 1e-7)`.
pub fn normalize_clip(clip: &AudioClip) -> Result<Vec<f64>> {
    if clip.samples.is_empty() {
        return Err(Error::ClipTooShort(0));
    }
    let scaled: Vec<f64> = clip.samples.iter().map(|&s| s as f64 / 32768.0).collect();
    let n = scaled.len() as f64;
    let mean = scaled.iter().sum::<f64>() / n;
    let std = (scaled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(scaled.iter().map(|x| (x - mean) / (std + NORM_EPS)).collect())
}

/// Unnormalized forward DFT by iterative radix-2 Cooley–Tukey.
pub fn fft_radix2(signal: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = signal.len();
    if !n.is_power_of_two() || !(4..=4096).contains(&n) {
        return Err(Error::NotPowerOfTwo(n));
    }
    let bits = n.trailing_zeros();
    let mut out: Vec<Complex64> = (0..n)
        .map(|i| signal[i.reverse_bits() >> (usize::BITS - bits)])
        .collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 / len as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for (k, w) in twiddles.iter().enumerate() {
                let a = out[start + k];
                let b = out[start + k + half] * w;
                out[start + k] = a + b;
                out[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    Ok(out)
}

/// Log-magnitude spectrogram frames of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    /// `T × 257` matrix, one row per frame.
    pub frames: Tensor,
    pub source_len: usize,
}

impl FeatureSequence {
    pub fn frame_count(&self) -> usize {
        self.frames.rows()
    }

    /// Binary dump: `T` and `F` as little-endian u32, then `T·F` LE f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.frames.rows() as u32).to_le_bytes())?;
        w.write_all(&(self.frames.cols() as u32).to_le_bytes())?;
        for v in self.frames.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)?;
        let t = u32_at(&header, 0) as usize;
        let f = u32_at(&header, 4) as usize;
        let mut buf = vec![0u8; t * f * 8];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let frames = Tensor::from_vec(t, f, data)?;
        Ok(Self {
            frames,
            source_len: (t - 1) * HOP_LEN + FRAME_LEN,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)?;
        file.flush()?;
        Ok(())
    }
}

/// Closed-form frame count for a signal of `len` samples.
pub fn frame_count(len: usize) -> usize {
    if len < FRAME_LEN {
        0
    } else {
        (len - FRAME_LEN) / HOP_LEN + 1
    }
}

fn hann_window() -> Vec<f64> {
    // periodic Hann
    (0..FRAME_LEN)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / FRAME_LEN as f64).cos())
        .collect()
}

/// 400-sample Hann frames, hop 160, zero-padded to 512, `ln(|X[k]| + 1e-10)`
/// for bins 0..=256.
pub fn log_spectrogram(signal: &[f64]) -> Result<FeatureSequence> {
    let t = frame_count(signal.len());
    if t == 0 {
        return Err(Error::ClipTooShort(signal.len()));
    }
    let window = hann_window();
    let mut frames = Tensor::zeros(t, FEATURE_DIM);
    let mut buf = vec![Complex64::new(0.0, 0.0); FFT_SIZE];
    for f in 0..t {
        let start = f * HOP_LEN;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < FRAME_LEN {
                Complex64::new(signal[start + i] * window[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        let spectrum = fft_radix2(&buf)?;
        for (o, x) in frames.row_mut(f).iter_mut().zip(&spectrum[..FEATURE_DIM]) {
            *o = (x.norm() + LOG_FLOOR).ln();
        }
    }
    Ok(FeatureSequence {
        frames,
        source_len: signal.len(),
    })
}

/// WAV bytes to features in one step.
pub fn wav_features(bytes: &[u8]) -> Result<FeatureSequence> {
    let clip = load_wav(bytes)?;
    if clip.samples.len() < FRAME_LEN {
        return Err(Error::ClipTooShort(clip.samples.len()));
    }
    log_spectrogram(&normalize_clip(&clip)?)
}

/// A rectangular batch of feature sequences padded to the batch maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct CollatedBatch {
    /// One `T_max × F` matrix per item; rows past the item's length are zero.
    pub features: Vec<Tensor>,
    /// `B × T_max`, 1 for real frames.
    pub mask: Vec<Vec<u8>>,
    pub labels: Vec<usize>,
    /// Original frame counts.
    pub lengths: Vec<usize>,
    /// Position of each item in the collate input.
    pub source_indices: Vec<usize>,
}

impl CollatedBatch {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.features.first().map_or(0, Tensor::rows)
    }

    pub fn padded_cells(&self) -> usize {
        self.lengths.iter().map(|l| self.max_len() - l).sum()
    }
}

/// Sorts items by frame count (descending, stable) and cuts them into
/// batches of at most `batch_size`, each padded to its own maximum.
///
/// When the item count is not a multiple of `batch_size`, the one short batch
/// is placed at whichever batch boundary yields the least padding (the tail
/// on ties), so the sorted layout never pads more than any other chunking of
/// the same items.
pub fn collate_batch(items: &[(FeatureSequence, usize)], batch_size: usize) -> Result<Vec<CollatedBatch>> {
    if batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be at least 1".into()));
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = items[0].0.frames.cols();
    if items.iter().any(|(f, _)| f.frames.cols() != dim) {
        return Err(Error::ShapeMismatch("feature sequences differ in width".into()));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].0.frame_count().cmp(&items[a].0.frame_count()));
    let lengths: Vec<usize> = order.iter().map(|&i| items[i].0.frame_count()).collect();

    let sizes = batch_sizes(&lengths, batch_size);
    let mut batches = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for size in sizes {
        let members = &order[start..start + size];
        let t_max = lengths[start];
        let mut batch = CollatedBatch {
            features: Vec::with_capacity(size),
            mask: Vec::with_capacity(size),
            labels: Vec::with_capacity(size),
            lengths: Vec::with_capacity(size),
            source_indices: members.to_vec(),
        };
        for &i in members {
            let (seq, label) = &items[i];
            let t = seq.frame_count();
            let mut padded = Tensor::zeros(t_max, dim);
            padded.data_mut()[..t * dim].copy_from_slice(seq.frames.data());
            let mut mask = vec![1u8; t];
            mask.resize(t_max, 0);
            batch.features.push(padded);
            batch.mask.push(mask);
            batch.labels.push(*label);
            batch.lengths.push(t);
        }
        batches.push(batch);
        start += size;
    }
    Ok(batches)
}

/// Batch sizes over descending `lengths`: full batches plus at most one short
/// batch at the cheapest position.
fn batch_sizes(lengths: &[usize], batch_size: usize) -> Vec<usize> {
    let n = lengths.len();
    let full = n / batch_size;
    let rem = n % batch_size;
    if rem == 0 {
        return vec![batch_size; full];
    }
    let cost = |sizes: &[usize]| -> usize {
        let mut start = 0;
        sizes
            .iter()
            .map(|&s| {
                let c = s * lengths[start];
                start += s;
                c
            })
            .sum()
    };
    let mut best: Option<(usize, Vec<usize>)> = None;
    for pos in (0..=full).rev() {
        let mut sizes = vec![batch_size; full];
        sizes.insert(pos, rem);
        let c = cost(&sizes);
        if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, sizes));
        }
    }
    best.expect("at least one layout").1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clip(samples: Vec<i16>) -> AudioClip {
        AudioClip {
            samples,
            sample_rate_hz: 16_000,
            label: None,
        }
    }

    #[test]
    fn one_second_of_audio() {
        let wav = encode_wav(&vec![0i16; 16_000], 16_000, 1);
        assert_eq!(u32_at(&wav, 40), 32_000);
        assert_eq!(load_wav(&wav).unwrap().samples.len(), 16_000);
    }

    #[test]
    fn little_endian_samples() {
        let mut wav = encode_wav(&[0, 0], 16_000, 1);
        wav[44] = 0xFF;
        wav[45] = 0x7F;
        wav[46] = 0x00;
        wav[47] = 0x80;
        assert_eq!(load_wav(&wav).unwrap().samples, vec![32767, -32768]);
    }

    #[test]
    fn rejects_unsupported_formats() {
        assert!(matches!(
            load_wav(&encode_wav(&[0; 8], 16_000, 2)),
            Err(Error::UnsupportedChannels(2))
        ));
        assert!(matches!(
            load_wav(&encode_wav(&[0; 8], 44_100, 1)),
            Err(Error::UnsupportedRate(44_100))
        ));
        let mut wav = encode_wav(&[0; 8], 16_000, 1);
        wav[34] = 8;
        assert!(matches!(load_wav(&wav), Err(Error::UnsupportedBitDepth(8))));
        assert!(matches!(load_wav(b"RIFX0000WAVE"), Err(Error::MalformedHeader(_))));
        let wav = encode_wav(&[0; 8], 16_000, 1);
        assert!(matches!(load_wav(&wav[..50]), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let plain = encode_wav(&[1, 2, 3], 16_000, 1);
        let mut wav = plain[..36].to_vec();
        wav.extend_from_slice(b"LIST");
        wav.extend_from_slice(&3u32.to_le_bytes());
        wav.extend_from_slice(&[1, 2, 3, 0]);
        wav.extend_from_slice(&plain[36..]);
        assert_eq!(load_wav(&wav).unwrap().samples, vec![1, 2, 3]);
    }

    #[test]
    fn constant_clip_normalizes_to_zero() {
        let out = normalize_clip(&clip(vec![1234; 500])).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-4));
    }

    fn two_pass(xs: &[f64]) -> (f64, f64) {
        let mut mean = 0.0;
        for x in xs {
            mean += x;
        }
        mean /= xs.len() as f64;
        let mut ss = 0.0;
        for x in xs {
            ss += (x - mean) * (x - mean);
        }
        (mean, (ss / xs.len() as f64).sqrt())
    }

    #[test]
    fn normalized_clip_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let samples: Vec<i16> = (0..2000).map(|_| rng.random_range(-20_000..20_000)).collect();
            let out = normalize_clip(&clip(samples.clone())).unwrap();
            let (mean, std) = two_pass(&out);
            assert!(mean.abs() < 1e-9);
            assert!((std - 1.0).abs() < 1e-6);

            let scaled: Vec<f64> = samples.iter().map(|&s| s as f64 / 32768.0).collect();
            let (m, s) = two_pass(&scaled);
            for (o, x) in out.iter().zip(&scaled) {
                assert!((o - (x - m) / (s + 1e-7)).abs() < 1e-12);
            }
        }
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (j * k % n) as f64 / n as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fft_fixtures() {
        let impulse = fft_radix2(&[c(1.0), c(0.0), c(0.0), c(0.0)]).unwrap();
        assert!(impulse.iter().all(|v| (v - c(1.0)).norm() < 1e-15));
        let constant = fft_radix2(&[c(1.0); 4]).unwrap();
        assert!((constant[0] - c(4.0)).norm() < 1e-15);
        assert!(constant[1..].iter().all(|v| v.norm() < 1e-15));
        assert!(matches!(fft_radix2(&[c(1.0); 6]), Err(Error::NotPowerOfTwo(6))));
        assert!(matches!(fft_radix2(&[c(1.0); 2]), Err(Error::NotPowerOfTwo(2))));
    }

    #[test]
    fn fft_matches_naive_dft_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(256);
        for n in [256usize, 512] {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let fast = fft_radix2(&x).unwrap();
            let slow = naive_dft(&x);
            let scale = slow.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() / scale < 1e-9);
            }
            let time: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let freq: f64 = fast.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
            assert!((time - freq).abs() / time < 1e-9);
        }
    }

    #[test]
    fn real_input_has_conjugate_symmetric_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<Complex64> = (0..512).map(|_| c(rng.random_range(-1.0..1.0))).collect();
        let spec = fft_radix2(&x).unwrap();
        for k in 1..512 {
            assert!((spec[k] - spec[512 - k].conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn spectrogram_framing() {
        assert_eq!(log_spectrogram(&vec![0.1; 400]).unwrap().frame_count(), 1);
        assert_eq!(log_spectrogram(&vec![0.1; 720]).unwrap().frame_count(), 3);
        assert!(matches!(log_spectrogram(&[0.0; 399]), Err(Error::ClipTooShort(399))));
        for len in 400..=4000 {
            assert_eq!(frame_count(len), (len - 400) / 160 + 1);
        }
        for len in [400, 559, 560, 1000, 3999, 4000] {
            let f = log_spectrogram(&vec![0.5; len]).unwrap();
            assert_eq!(f.frame_count(), (len - 400) / 160 + 1);
            assert_eq!(f.frames.cols(), 257);
        }
    }

    #[test]
    fn silent_signal_hits_the_log_floor() {
        let f = log_spectrogram(&[0.0; 720]).unwrap();
        assert!(f.frames.data().iter().all(|&v| (v - 1e-10f64.ln()).abs() < 1e-12));
        assert!((1e-10f64.ln() + 23.0259).abs() < 1e-4);
    }

    #[test]
    fn tone_peaks_at_its_bin() {
        // 1 kHz at 16 kHz sampling lands on bin 1000 / (16000 / 512) = 32.
        let signal: Vec<f64> = (0..400)
            .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 16_000.0).sin())
            .collect();
        let f = log_spectrogram(&signal).unwrap();
        let row = f.frames.row(0);
        let peak = (0..257).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(peak, 32);
    }

    #[test]
    fn feature_dump_round_trip() {
        let f = log_spectrogram(&(0..880).map(|i| (i as f64 * 0.01).sin()).collect::<Vec<_>>()).unwrap();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        assert_eq!(u32_at(&buf, 0), 4);
        assert_eq!(u32_at(&buf, 4), 257);
        assert_eq!(buf.len(), 8 + 4 * 257 * 8);
        let back = FeatureSequence::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.frames, f.frames);
    }

    fn seq(t: usize) -> FeatureSequence {
        FeatureSequence {
            frames: Tensor::filled(t, 3, t as f64),
            source_len: (t - 1) * HOP_LEN + FRAME_LEN,
        }
    }

    #[test]
    fn collation_fixtures() {
        let items: Vec<_> = [5, 3, 8].iter().enumerate().map(|(i, &t)| (seq(t), i)).collect();
        let batches = collate_batch(&items, 3).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].max_len(), 8);
        let sums: Vec<usize> = batches[0]
            .mask
            .iter()
            .map(|m| m.iter().map(|&v| v as usize).sum())
            .collect();
        assert_eq!(sums, vec![8, 5, 3]);
        assert_eq!(batches[0].labels, vec![2, 0, 1]);

        let items: Vec<_> = [3, 9, 5, 2].iter().map(|&t| (seq(t), 0)).collect();
        let batches = collate_batch(&items, 2).unwrap();
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[0].lengths, vec![9, 5]);
        assert_eq!(batches[0].max_len(), 9);
        assert_eq!(batches[1].lengths, vec![3, 2]);
        assert_eq!(batches[1].max_len(), 3);
        let padded = &batches[1].features[1];
        assert!(padded.row(2).iter().all(|&v| v == 0.0));
        assert!(padded.row(1).iter().all(|&v| v == 2.0));
    }

    #[test]
    fn short_batch_goes_where_it_pads_least() {
        let items: Vec<_> = [1, 1, 9].iter().map(|&t| (seq(t), 0)).collect();
        let batches = collate_batch(&items, 2).unwrap();
        assert_eq!(batches[0].lengths, vec![9]);
        assert_eq!(batches[1].lengths, vec![1, 1]);
        assert_eq!(batches.iter().map(CollatedBatch::padded_cells).sum::<usize>(), 0);

        let items: Vec<_> = [9, 9, 1].iter().map(|&t| (seq(t), 0)).collect();
        let batches = collate_batch(&items, 2).unwrap();
        assert_eq!(batches[0].lengths, vec![9, 9]);
        assert_eq!(batches[1].lengths, vec![1]);
    }

    #[test]
    fn collation_preconditions() {
        assert!(collate_batch(&[], 2).is_err());
        assert!(collate_batch(&[(seq(2), 0)], 0).is_err());
    }
}
