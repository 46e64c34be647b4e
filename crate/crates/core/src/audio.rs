//! PCM ingestion, framing and silence gating.
//!
//! Everything downstream works in normalized frequency, so the sample rate is
//! carried as metadata only and never resampled.

use std::io::{Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Energy floor for an all-zero frame.
pub const ENERGY_FLOOR_DB: f64 = -120.0;

/// Default silence threshold, dB relative to full scale.
pub const DEFAULT_SILENCE_DB: f64 = -40.0;

const PCM16_SCALE: f64 = 32768.0;

/// Mono PCM samples in nominal range [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::ParameterOutOfRange(
                "sample rate must be positive".into(),
            ));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate_hz,
        )
    }
}

/// Reads a RIFF/WAVE file (PCM16 or float32), averaging channels to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| map_hound(e, path))?;
    decode(reader, path)
}

fn decode<R: std::io::Read>(reader: WavReader<R>, path: &Path) -> Result<AudioBuffer> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::MalformedHeader("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(e, path))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(e, path))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!("{fmt:?} {bits}-bit")));
        }
    };
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioBuffer::new(mono, spec.sample_rate)
}

fn map_hound(err: hound::Error, path: &Path) -> Error {
    match err {
        hound::Error::IoError(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Error::NotFound(path.to_path_buf())
        }
        hound::Error::IoError(e) => Error::MalformedHeader(format!("{}: {e}", path.display())),
        hound::Error::FormatError(msg) => Error::MalformedHeader(msg.to_string()),
        hound::Error::Unsupported => {
            Error::UnsupportedEncoding("compressed or unknown format".into())
        }
        other => Error::UnsupportedEncoding(other.to_string()),
    }
}

/// Writes a mono PCM16 WAV. Samples outside [-1, 1) are clamped.
pub fn write_wav(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_wav_to(std::io::BufWriter::new(file), buf)
}

pub fn write_wav_to<W: Write + Seek>(writer: W, buf: &AudioBuffer) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let io_err = |e: hound::Error| Error::Io {
        path: "<wav writer>".into(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut w = WavWriter::new(writer, spec).map_err(io_err)?;
    for &s in &buf.samples {
        let q = (s * PCM16_SCALE)
            .round()
            .clamp(-PCM16_SCALE, PCM16_SCALE - 1.0) as i16;
        w.write_sample(q).map_err(io_err)?;
    }
    w.finalize().map_err(io_err)
}

/// Fixed-length analysis windows over a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Vec<f64>>,
    frame_len: usize,
    hop: usize,
    source_rate_hz: u32,
}

impl FrameSequence {
    /// Frames `samples` with an explicit hop. The trailing partial window is dropped.
    pub fn from_samples(
        samples: &[f64],
        frame_len: usize,
        hop: usize,
        source_rate_hz: u32,
    ) -> Result<Self> {
        if frame_len < 2 {
            return Err(Error::ParameterOutOfRange(format!(
                "frame_len {frame_len} < 2"
            )));
        }
        if hop == 0 {
            return Err(Error::ParameterOutOfRange("hop must be positive".into()));
        }
        if samples.len() < frame_len {
            return Err(Error::InputTooShort {
                needed: frame_len,
                got: samples.len(),
            });
        }
        let count = (samples.len() - frame_len) / hop + 1;
        let frames = (0..count)
            .map(|i| samples[i * hop..i * hop + frame_len].to_vec())
            .collect();
        Ok(Self {
            frames,
            frame_len,
            hop,
            source_rate_hz,
        })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn source_rate_hz(&self) -> u32 {
        self.source_rate_hz
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Sample offset of frame `i` in the source.
    pub fn start(&self, i: usize) -> usize {
        i * self.hop
    }

    /// Keeps only the frames whose `keep` flag is set, preserving order.
    pub fn select(&self, keep: &[bool]) -> Self {
        let frames = self
            .frames
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(f, _)| f.clone())
            .collect();
        Self { frames, ..*self }
    }

    /// Frames that do not overlap their predecessor. With `hop >= frame_len`
    /// this is every frame; with 50% overlap it is every other one.
    pub fn non_overlapping(&self) -> Self {
        if self.hop >= self.frame_len {
            return self.clone();
        }
        let stride = self.frame_len.div_ceil(self.hop);
        let frames = self.frames.iter().step_by(stride).cloned().collect();
        Self {
            frames,
            hop: self.hop * stride,
            ..*self
        }
    }
}

/// Hop length for a given overlap fraction.
pub fn hop_for(frame_len: usize, overlap_fraction: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::ParameterOutOfRange(format!(
            "overlap {overlap_fraction} not in [0, 1)"
        )));
    }
    Ok(((frame_len as f64 * (1.0 - overlap_fraction)).round() as usize).max(1))
}

pub fn frame_signal(
    buf: &AudioBuffer,
    frame_len: usize,
    overlap_fraction: f64,
) -> Result<FrameSequence> {
    let hop = hop_for(frame_len, overlap_fraction)?;
    FrameSequence::from_samples(&buf.samples, frame_len, hop, buf.sample_rate_hz)
}

/// Per-frame silence flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameActivity {
    pub active: Vec<bool>,
    pub energy_db: Vec<f64>,
    pub silence_threshold_db: f64,
}

impl FrameActivity {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

/// RMS level in dB relative to full scale, clamped at [`ENERGY_FLOOR_DB`].
pub fn rms_dbfs(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return ENERGY_FLOOR_DB;
    }
    let ms = samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64;
    if ms <= 0.0 {
        return ENERGY_FLOOR_DB;
    }
    (10.0 * ms.log10()).max(ENERGY_FLOOR_DB)
}

pub fn gate_silence(frames: &FrameSequence, silence_threshold_db: f64) -> FrameActivity {
    let energy_db: Vec<f64> = frames.frames.iter().map(|f| rms_dbfs(f)).collect();
    let active = energy_db
        .iter()
        .map(|&e| e >= silence_threshold_db)
        .collect();
    FrameActivity {
        active,
        energy_db,
        silence_threshold_db,
    }
}
