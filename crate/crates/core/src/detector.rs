//! Frame-level replay detection: per-frame Hinich decisions, bicoherence
//! features and QPC peaks, aggregated into a recording verdict.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{frame_signal, gate_silence, hop_for, AudioBuffer, DEFAULT_SILENCE_DB};
use crate::bispectrum::{estimate_bicoherence, BicoherenceGrid, DEFAULT_FFT_LEN};
use crate::error::{Error, Result};
use crate::hinich::{hinich_test_signal, HinichConfig, HinichDecision, HinichResult, MIN_SEGMENTS};
use crate::qpc::{detect_qpc_peaks, qpc_shift_metric, QpcConfig, QpcFramePeaks, QpcScatter};
use crate::smoothing::SmoothingWindow;

pub const DEFAULT_FRAME_LEN: usize = 1024;
pub const DEFAULT_FRAME_OVERLAP: f64 = 0.5;
/// Recordings with at least this fraction of failing active frames are
/// classified as replayed.
pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;
/// Half-width of the phase windows around 0 and π/2.
pub const PHASE_BIAS_TOLERANCE: f64 = PI / 16.0;

/// How the two Hinich tests combine into a frame failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Gaussianity rejected and linearity rejected.
    #[default]
    Conjunctive,
    /// Either test rejected.
    Disjunctive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub frame_len: usize,
    pub overlap: f64,
    /// Transform length for the whole-recording bicoherence.
    pub fft_len: usize,
    /// Smoothing for the whole-recording bicoherence.
    pub smoothing: SmoothingWindow,
    pub silence_threshold_db: f64,
    pub hinich: HinichConfig,
    pub qpc: QpcConfig,
    pub decision_threshold: f64,
    pub rule: DecisionRule,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            frame_len: DEFAULT_FRAME_LEN,
            overlap: DEFAULT_FRAME_OVERLAP,
            fft_len: DEFAULT_FFT_LEN,
            smoothing: SmoothingWindow::default(),
            silence_threshold_db: DEFAULT_SILENCE_DB,
            hinich: HinichConfig::default(),
            qpc: QpcConfig::default(),
            decision_threshold: DEFAULT_DECISION_THRESHOLD,
            rule: DecisionRule::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.hinich.validate()?;
        self.qpc.validate()?;
        hop_for(self.frame_len, self.overlap)?;
        let needed = MIN_SEGMENTS * self.hinich.segment_len;
        if self.frame_len < needed {
            return Err(Error::ParameterOutOfRange(format!(
                "frame length {} too short for {} hinich segments of {} samples",
                self.frame_len, MIN_SEGMENTS, self.hinich.segment_len
            )));
        }
        if self.fft_len < self.frame_len || !self.fft_len.is_multiple_of(2) {
            return Err(Error::ParameterOutOfRange(format!(
                "fft length must be even and >= frame length {}, got {}",
                self.frame_len, self.fft_len
            )));
        }
        let sub_hop = hop_for(self.qpc.sub_len, self.qpc.sub_overlap)?;
        if self.frame_len < self.qpc.sub_len + sub_hop {
            return Err(Error::ParameterOutOfRange(format!(
                "frame length {} holds fewer than two QPC sub-segments of {}",
                self.frame_len, self.qpc.sub_len
            )));
        }
        if !(0.0..=1.0).contains(&self.decision_threshold) {
            return Err(Error::ParameterOutOfRange(format!(
                "decision threshold must be in [0, 1], got {}",
                self.decision_threshold
            )));
        }
        if !self.silence_threshold_db.is_finite() {
            return Err(Error::ParameterOutOfRange(
                "silence threshold must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Equal in everything that affects frame features.
    pub fn same_analysis(&self, other: &Self) -> bool {
        Self {
            decision_threshold: 0.0,
            ..self.clone()
        } == Self {
            decision_threshold: 0.0,
            ..other.clone()
        }
    }

    fn frame_fails(&self, r: &HinichResult) -> bool {
        let lin = r.linearity_rejected == Some(true);
        match self.rule {
            DecisionRule::Conjunctive => r.gaussianity_rejected && lin,
            DecisionRule::Disjunctive => r.gaussianity_rejected || lin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Genuine,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub frame_index: usize,
    pub energy_db: f64,
    /// Principal-domain mean of the within-frame bicoherence.
    pub mean_bicoherence_magnitude: f64,
    pub phase_bias_score: f64,
    pub qpc_peak_count: usize,
    pub hinich: HinichResult,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean_bicoherence_magnitude: f64,
    pub phase_bias_score: f64,
    pub mean_qpc_peak_count: f64,
    pub gaussianity_rejection_fraction: f64,
    pub linearity_rejection_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub sample_rate_hz: u32,
    pub sample_count: usize,
    pub frame_count: usize,
    pub active_frame_count: usize,
    pub failing_fraction: f64,
    pub verdict: Verdict,
    pub aggregates: Aggregates,
    /// Active frames only.
    pub frames: Vec<FrameFeatures>,
    pub qpc_scatter: QpcScatter,
    pub config: DetectorConfig,
}

/// Magnitude-weighted fraction of principal-domain points whose phase lies
/// within π/16 of 0 or π/2. A zero grid scores 0.
pub fn phase_bias_score(grid: &BicoherenceGrid) -> f64 {
    let (mut hit, mut total) = (0.0, 0.0);
    for (m, n) in grid.principal_points() {
        let w = grid.magnitude(m, n);
        let p = grid.phase(m, n);
        total += w;
        if p.abs() <= PHASE_BIAS_TOLERANCE || (p - PI / 2.0).abs() <= PHASE_BIAS_TOLERANCE {
            hit += w;
        }
    }
    if total > 0.0 {
        hit / total
    } else {
        0.0
    }
}

fn degenerate_hinich() -> HinichResult {
    HinichResult {
        segment_count: 0,
        gaussianity_stat: 0.0,
        gaussianity_dof: 0,
        gaussianity_pvalue: 1.0,
        gaussianity_rejected: false,
        linearity_stat: None,
        linearity_reference: None,
        noncentrality: None,
        linearity_rejected: None,
        decision: Some(HinichDecision::Gaussian),
    }
}

fn analyze_frame(
    index: usize,
    energy_db: f64,
    frame: &[f64],
    config: &DetectorConfig,
) -> Result<(FrameFeatures, QpcFramePeaks)> {
    // A frame can pass the energy gate yet have no fluctuation (pure DC);
    // its bispectrum is zero, which is the Gaussian case.
    let hinich = match hinich_test_signal(frame, &config.hinich) {
        Err(Error::DegenerateInput) => degenerate_hinich(),
        other => other?,
    };
    let grid = config.qpc.frame_grid(frame)?;
    let peaks = detect_qpc_peaks(&grid, config.qpc.threshold, config.qpc.max_peaks);
    let features = FrameFeatures {
        frame_index: index,
        energy_db,
        mean_bicoherence_magnitude: grid.principal_mean(),
        phase_bias_score: phase_bias_score(&grid),
        qpc_peak_count: peaks.len(),
        failed: config.frame_fails(&hinich),
        hinich,
    };
    Ok((
        features,
        QpcFramePeaks {
            frame_index: index,
            peaks,
        },
    ))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn analyze_recording(audio: &AudioBuffer, config: &DetectorConfig) -> Result<DetectionReport> {
    config.validate()?;
    let frames = frame_signal(audio, config.frame_len, config.overlap)?;
    let activity = gate_silence(&frames, config.silence_threshold_db);
    if activity.active_count() == 0 {
        return Err(Error::NoActiveFrames);
    }
    let active: Vec<usize> = (0..frames.len()).filter(|&i| activity.active[i]).collect();
    let results: Vec<(FrameFeatures, QpcFramePeaks)> = active
        .par_iter()
        .map(|&i| analyze_frame(i, activity.energy_db[i], &frames.frames()[i], config))
        .collect::<Result<_>>()?;
    let (features, peaks): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let n = features.len() as f64;
    let failing_fraction = features.iter().filter(|f| f.failed).count() as f64 / n;
    let aggregates = Aggregates {
        mean_bicoherence_magnitude: mean(features.iter().map(|f| f.mean_bicoherence_magnitude)),
        phase_bias_score: mean(features.iter().map(|f| f.phase_bias_score)),
        mean_qpc_peak_count: mean(features.iter().map(|f| f.qpc_peak_count as f64)),
        gaussianity_rejection_fraction: features
            .iter()
            .filter(|f| f.hinich.gaussianity_rejected)
            .count() as f64
            / n,
        linearity_rejection_fraction: features
            .iter()
            .filter(|f| f.hinich.linearity_rejected == Some(true))
            .count() as f64
            / n,
    };
    let mut report = DetectionReport {
        sample_rate_hz: audio.sample_rate_hz(),
        sample_count: audio.len(),
        frame_count: frames.len(),
        active_frame_count: features.len(),
        failing_fraction,
        verdict: Verdict::Genuine,
        aggregates,
        frames: features,
        qpc_scatter: QpcScatter::new(None, peaks)?,
        config: config.clone(),
    };
    report.verdict = classify(&report, config.decision_threshold);
    Ok(report)
}

/// Whole-recording bicoherence over the active frames.
pub fn recording_bicoherence(
    audio: &AudioBuffer,
    config: &DetectorConfig,
) -> Result<BicoherenceGrid> {
    config.validate()?;
    let frames = frame_signal(audio, config.frame_len, config.overlap)?;
    let activity = gate_silence(&frames, config.silence_threshold_db);
    let active = frames.select(&activity.active);
    estimate_bicoherence(&active, config.fft_len, &config.smoothing)
}

/// Replay when the failing fraction reaches `threshold`.
pub fn classify(report: &DetectionReport, threshold: f64) -> Verdict {
    if report.failing_fraction >= threshold {
        Verdict::Replay
    } else {
        Verdict::Genuine
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    /// Differences are `b - a`.
    pub delta_mean_bicoherence: f64,
    pub delta_phase_bias: f64,
    pub delta_failing_fraction: f64,
    pub delta_mean_qpc_peak_count: f64,
    /// `None` when exactly one recording has no QPC peaks.
    pub qpc_shift: Option<f64>,
    pub verdict_a: Verdict,
    pub verdict_b: Verdict,
    pub warnings: Vec<String>,
}

pub fn compare_recordings(a: &DetectionReport, b: &DetectionReport) -> Result<ComparisonSummary> {
    if !a.config.same_analysis(&b.config) {
        return Err(Error::ConfigMismatch(
            "reports were produced with different analysis settings".into(),
        ));
    }
    let mut warnings = Vec::new();
    if a.sample_rate_hz != b.sample_rate_hz {
        warnings.push(format!(
            "sample rates differ: {} Hz vs {} Hz",
            a.sample_rate_hz, b.sample_rate_hz
        ));
    }
    let qpc_shift = match (a.qpc_scatter.peak_count(), b.qpc_scatter.peak_count()) {
        (0, 0) => Some(0.0),
        (0, _) | (_, 0) => {
            warnings.push("one recording has no QPC peaks; shift undefined".into());
            None
        }
        _ => Some(qpc_shift_metric(&a.qpc_scatter, &b.qpc_scatter)?),
    };
    Ok(ComparisonSummary {
        delta_mean_bicoherence: b.aggregates.mean_bicoherence_magnitude
            - a.aggregates.mean_bicoherence_magnitude,
        delta_phase_bias: b.aggregates.phase_bias_score - a.aggregates.phase_bias_score,
        delta_failing_fraction: b.failing_fraction - a.failing_fraction,
        delta_mean_qpc_peak_count: b.aggregates.mean_qpc_peak_count
            - a.aggregates.mean_qpc_peak_count,
        qpc_shift,
        verdict_a: a.verdict,
        verdict_b: b.verdict,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::white_gaussian;
    use crate::smoothing::{SmoothingDescriptor, SmoothingKind};

    fn grid(mags: Vec<f64>, phases: Vec<f64>) -> BicoherenceGrid {
        BicoherenceGrid::from_parts(
            4,
            8,
            SmoothingDescriptor {
                kind: SmoothingKind::None,
                bandwidth: 1,
            },
            mags,
            phases,
        )
        .unwrap()
    }

    #[test]
    fn phase_bias_of_zero_grid_is_zero() {
        assert_eq!(phase_bias_score(&grid(vec![0.0; 9], vec![0.0; 9])), 0.0);
    }

    #[test]
    fn phase_bias_weights_by_magnitude() {
        // principal points of F=4: (0,0), (1,0), (1,1), (2,0)
        let mut mag = vec![0.0; 9];
        let mut ph = vec![0.0; 9];
        mag[0] = 1.0; // phase 0, counted
        mag[3] = 3.0; // (1,0), phase π
        ph[3] = PI;
        mag[4] = 1.0; // (1,1), near π/2, counted
        ph[4] = PI / 2.0 + 0.1;
        let s = phase_bias_score(&grid(mag, ph));
        assert!((s - 2.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::default().validate().is_ok());
        let short = DetectorConfig {
            frame_len: 512,
            fft_len: 512,
            ..Default::default()
        };
        assert!(short.validate().is_err());
        let fft = DetectorConfig {
            fft_len: 512,
            ..Default::default()
        };
        assert!(fft.validate().is_err());
        let thr = DetectorConfig {
            decision_threshold: 1.5,
            ..Default::default()
        };
        assert!(thr.validate().is_err());
    }

    #[test]
    fn silent_recording_has_no_active_frames() {
        let buf = AudioBuffer::new(vec![0.0; 8192], 8000).unwrap();
        assert!(matches!(
            analyze_recording(&buf, &DetectorConfig::default()),
            Err(Error::NoActiveFrames)
        ));
    }

    #[test]
    fn dc_frames_count_as_gaussian() {
        let buf = AudioBuffer::new(vec![0.5; 4096], 8000).unwrap();
        let r = analyze_recording(&buf, &DetectorConfig::default()).unwrap();
        assert_eq!(r.active_frame_count, r.frame_count);
        assert_eq!(r.failing_fraction, 0.0);
        assert_eq!(r.verdict, Verdict::Genuine);
    }

    #[test]
    fn classify_threshold_is_inclusive() {
        let buf = AudioBuffer::new(white_gaussian(8192, 0.1, 1), 8000).unwrap();
        let mut r = analyze_recording(&buf, &DetectorConfig::default()).unwrap();
        r.failing_fraction = 0.35;
        assert_eq!(classify(&r, 0.35), Verdict::Replay);
        assert_eq!(classify(&r, 0.36), Verdict::Genuine);
    }

    #[test]
    fn compare_self_is_zero_and_mismatch_errors() {
        let buf = AudioBuffer::new(white_gaussian(8192, 0.1, 2), 8000).unwrap();
        let cfg = DetectorConfig::default();
        let r = analyze_recording(&buf, &cfg).unwrap();
        let c = compare_recordings(&r, &r).unwrap();
        assert_eq!(c.delta_mean_bicoherence, 0.0);
        assert_eq!(c.delta_failing_fraction, 0.0);
        assert_eq!(c.qpc_shift, Some(0.0));
        assert!(c.warnings.is_empty());

        let other = analyze_recording(
            &buf,
            &DetectorConfig {
                fft_len: 2048,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert!(matches!(
            compare_recordings(&r, &other),
            Err(Error::ConfigMismatch(_))
        ));
        let relaxed = DetectorConfig {
            decision_threshold: 0.9,
            ..cfg
        };
        assert!(r.config.same_analysis(&relaxed));
    }
}
