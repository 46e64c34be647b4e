//! Quadratic phase coupling: bicoherence peak picking, frame-level scatter
//! and the shift between two scatters.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{hop_for, FrameActivity, FrameSequence};
use crate::bispectrum::{estimate_bicoherence, BicoherenceGrid};
use crate::error::{Error, Result};
use crate::smoothing::SmoothingWindow;

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_SUB_LEN: usize = 256;
pub const DEFAULT_SUB_OVERLAP: f64 = 0.5;
pub const DEFAULT_MAX_PEAKS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpcPeak {
    pub m: usize,
    pub n: usize,
    /// Normalized frequencies `m/F`, `n/F`.
    pub f1: f64,
    pub f2: f64,
    pub magnitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordingLabel {
    #[serde(rename = "direct")]
    Direct,
    #[serde(rename = "RA-1")]
    Ra1,
    #[serde(rename = "RA-2")]
    Ra2,
}

impl RecordingLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Ra1 => "RA-1",
            Self::Ra2 => "RA-2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpcFramePeaks {
    pub frame_index: usize,
    pub peaks: Vec<QpcPeak>,
}

/// Peaks of every active frame, in increasing frame order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpcScatter {
    pub label: Option<RecordingLabel>,
    pub frames: Vec<QpcFramePeaks>,
}

impl QpcScatter {
    pub fn new(label: Option<RecordingLabel>, frames: Vec<QpcFramePeaks>) -> Result<Self> {
        if frames
            .windows(2)
            .any(|w| w[0].frame_index >= w[1].frame_index)
        {
            return Err(Error::ParameterOutOfRange(
                "scatter frame indices must be strictly increasing".into(),
            ));
        }
        Ok(Self { label, frames })
    }

    pub fn with_label(mut self, label: RecordingLabel) -> Self {
        self.label = Some(label);
        self
    }

    pub fn peak_count(&self) -> usize {
        self.frames.iter().map(|f| f.peaks.len()).sum()
    }

    pub fn locations(&self) -> Vec<(f64, f64)> {
        self.frames
            .iter()
            .flat_map(|f| f.peaks.iter().map(|p| (p.f1, p.f2)))
            .collect()
    }

    /// `frame,f1,f2,magnitude`, one row per peak.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,f1,f2,magnitude\n");
        for f in &self.frames {
            for p in &f.peaks {
                let _ = writeln!(
                    s,
                    "{},{},{},{:.12e}",
                    f.frame_index, p.f1, p.f2, p.magnitude
                );
            }
        }
        s
    }
}

/// Within-frame bicoherence settings for peak picking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpcConfig {
    pub sub_len: usize,
    pub sub_overlap: f64,
    pub smoothing: SmoothingWindow,
    pub threshold: f64,
    pub max_peaks: usize,
}

impl Default for QpcConfig {
    fn default() -> Self {
        Self {
            sub_len: DEFAULT_SUB_LEN,
            sub_overlap: DEFAULT_SUB_OVERLAP,
            smoothing: SmoothingWindow::default(),
            threshold: DEFAULT_THRESHOLD,
            max_peaks: DEFAULT_MAX_PEAKS,
        }
    }
}

impl QpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::ParameterOutOfRange(format!(
                "QPC threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.sub_len < 4 || !self.sub_len.is_multiple_of(2) {
            return Err(Error::ParameterOutOfRange(format!(
                "QPC sub-segment length must be even and >= 4, got {}",
                self.sub_len
            )));
        }
        hop_for(self.sub_len, self.sub_overlap)?;
        Ok(())
    }

    /// Bicoherence of one frame, sub-segmented per this config.
    pub fn frame_grid(&self, frame: &[f64]) -> Result<BicoherenceGrid> {
        let hop = hop_for(self.sub_len, self.sub_overlap)?;
        let subs = FrameSequence::from_samples(frame, self.sub_len, hop, 1)?;
        estimate_bicoherence(&subs, self.sub_len, &self.smoothing)
    }
}

/// `a` beats `b` when larger, or equal and lexicographically lower.
fn beats(a: (f64, (usize, usize)), b: (f64, (usize, usize))) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Local maxima over the principal domain with magnitude `>= threshold`,
/// strongest first. A point must beat each of its 8 grid neighbours (its own
/// mirror image excluded); equal values go to the lower `(m, n)`.
pub fn detect_qpc_peaks(grid: &BicoherenceGrid, threshold: f64, max_peaks: usize) -> Vec<QpcPeak> {
    let dim = grid.dim() as isize;
    let f = grid.fft_len() as f64;
    let mut peaks: Vec<QpcPeak> = grid
        .principal_points()
        .filter_map(|(m, n)| {
            let v = grid.magnitude(m, n);
            if v < threshold {
                return None;
            }
            for d1 in -1isize..=1 {
                for d2 in -1isize..=1 {
                    if d1 == 0 && d2 == 0 {
                        continue;
                    }
                    let (i, j) = (m as isize + d1, n as isize + d2);
                    if i < 0 || j < 0 || i >= dim || j >= dim {
                        continue;
                    }
                    let (i, j) = (i as usize, j as usize);
                    if (i, j) == (n, m) {
                        continue;
                    }
                    if !beats((v, (m, n)), (grid.magnitude(i, j), (i, j))) {
                        return None;
                    }
                }
            }
            Some(QpcPeak {
                m,
                n,
                f1: m as f64 / f,
                f2: n as f64 / f,
                magnitude: v,
                phase: grid.phase(m, n),
            })
        })
        .collect();
    peaks.sort_by(|a, b| {
        b.magnitude
            .total_cmp(&a.magnitude)
            .then((a.m, a.n).cmp(&(b.m, b.n)))
    });
    peaks.truncate(max_peaks);
    peaks
}

/// Per-frame peak picking over the active frames. A recording whose frames
/// are all silent gives an empty scatter.
pub fn qpc_scatter(
    frames: &FrameSequence,
    activity: &FrameActivity,
    config: &QpcConfig,
) -> Result<QpcScatter> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::NoActiveFrames);
    }
    if activity.active.len() != frames.len() {
        return Err(Error::ParameterOutOfRange(
            "activity flags do not match the frame count".into(),
        ));
    }
    let per_frame: Vec<Option<QpcFramePeaks>> = frames
        .frames()
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            if !activity.active[i] {
                return Ok(None);
            }
            let grid = config.frame_grid(frame)?;
            Ok(Some(QpcFramePeaks {
                frame_index: i,
                peaks: detect_qpc_peaks(&grid, config.threshold, config.max_peaks),
            }))
        })
        .collect::<Result<_>>()?;
    QpcScatter::new(None, per_frame.into_iter().flatten().collect())
}

fn mean_nearest(from: &[(f64, f64)], to: &[(f64, f64)]) -> f64 {
    let sum: f64 = from
        .iter()
        .map(|&(x, y)| {
            to.iter()
                .map(|&(u, v)| ((x - u).powi(2) + (y - v).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    sum / from.len() as f64
}

/// Symmetric Chamfer distance between peak locations in normalized
/// bifrequency: the larger of the two directed mean nearest-neighbour
/// distances.
pub fn qpc_shift_metric(reference: &QpcScatter, candidate: &QpcScatter) -> Result<f64> {
    let a = reference.locations();
    let b = candidate.locations();
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyScatter);
    }
    Ok(mean_nearest(&a, &b).max(mean_nearest(&b, &a)))
}
