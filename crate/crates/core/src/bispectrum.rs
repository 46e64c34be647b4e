//! Direct (FFT-based) bispectrum and bicoherence estimation.
//!
//! Grids cover `m, n ∈ [0, F/2]` and are stored row-major as `dim x dim`
//! with `dim = F/2 + 1`. Index `m + n` wraps modulo `F`, which for real input
//! is the conjugate-symmetric fold. Only the lower triangle `n <= m` is
//! accumulated; the upper one is mirrored, so symmetry holds bit-exactly.
//!
//! Accumulation runs in parallel over rows `m`; within a point, segments are
//! summed in frame order, so results do not depend on the thread count.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::FrameSequence;
use crate::error::{Error, Result};
use crate::smoothing::{apply_taps, SmoothingDescriptor, SmoothingWindow};

pub const DEFAULT_SEGMENT_LEN: usize = 1024;
pub const DEFAULT_FFT_LEN: usize = 1024;
pub const DEFAULT_OVERLAP: f64 = 0.5;
/// Bins whose mean power is below this fraction of the strongest bin's
/// (-200 dB) are zeroed. That is far under any real noise floor but well
/// above FFT rounding residue, which would otherwise make ratios at empty
/// bins rounding noise over rounding noise.
pub const EMPTY_BIN_FLOOR: f64 = 1e-20;

/// Estimator settings for whole-recording bicoherence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicoherenceConfig {
    pub segment_len: usize,
    pub fft_len: usize,
    pub overlap: f64,
    pub smoothing: SmoothingWindow,
}

impl Default for BicoherenceConfig {
    fn default() -> Self {
        Self {
            segment_len: DEFAULT_SEGMENT_LEN,
            fft_len: DEFAULT_FFT_LEN,
            overlap: DEFAULT_OVERLAP,
            smoothing: SmoothingWindow::default(),
        }
    }
}

fn check_fft_len(fft_len: usize) -> Result<()> {
    if fft_len < 4 || !fft_len.is_multiple_of(2) {
        return Err(Error::ParameterOutOfRange(format!(
            "fft length must be even and >= 4, got {fft_len}"
        )));
    }
    Ok(())
}

/// Non-redundant triangle `{0 <= n <= m, m + n <= F/2}`, ordered by `m` then `n`.
pub fn principal_domain_mask(fft_len: usize) -> Result<Vec<(usize, usize)>> {
    check_fft_len(fft_len)?;
    let half = fft_len / 2;
    let mut out = Vec::new();
    for m in 0..=half {
        for n in 0..=m.min(half - m) {
            out.push((m, n));
        }
    }
    Ok(out)
}

/// Mean-removed, zero-padded `F`-point spectra of every frame. Bins at
/// rounding level across all frames (see `EMPTY_BIN_FLOOR`) are set to zero.
pub fn segment_spectra(frames: &FrameSequence, fft_len: usize) -> Result<Vec<Vec<Complex64>>> {
    check_fft_len(fft_len)?;
    if frames.is_empty() {
        return Err(Error::NoActiveFrames);
    }
    if fft_len < frames.frame_len() {
        return Err(Error::ParameterOutOfRange(format!(
            "fft length {fft_len} shorter than frame length {}",
            frames.frame_len()
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);
    let out = frames
        .frames()
        .iter()
        .map(|frame| {
            let mean = frame.iter().sum::<f64>() / frame.len() as f64;
            let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
            for (b, &x) in buf.iter_mut().zip(frame) {
                b.re = x - mean;
            }
            fft.process(&mut buf);
            buf
        })
        .collect::<Vec<_>>();
    Ok(clear_empty_bins(out))
}

fn clear_empty_bins(mut spectra: Vec<Vec<Complex64>>) -> Vec<Vec<Complex64>> {
    let n = spectra.first().map_or(0, Vec::len);
    let power: Vec<f64> = (0..n)
        .map(|k| spectra.iter().map(|s| s[k].norm_sqr()).sum())
        .collect();
    let floor = EMPTY_BIN_FLOOR * power.iter().cloned().fold(0.0, f64::max);
    for (k, &p) in power.iter().enumerate() {
        if p < floor {
            for s in &mut spectra {
                s[k] = Complex64::new(0.0, 0.0);
            }
        }
    }
    spectra
}

/// Segment-averaged triple product and the two power terms of its
/// Cauchy-Schwarz bound, over the full `dim x dim` grid.
pub(crate) struct Moments {
    pub dim: usize,
    pub triple: Vec<Complex64>,
    pub p12: Vec<f64>,
    pub p3: Vec<f64>,
}

pub(crate) fn accumulate(spectra: &[Vec<Complex64>], fft_len: usize, with_power: bool) -> Moments {
    let dim = fft_len / 2 + 1;
    let k = spectra.len() as f64;
    let rows: Vec<Vec<(Complex64, f64, f64)>> = (0..dim)
        .into_par_iter()
        .map(|m| {
            (0..=m)
                .map(|n| {
                    let s = (m + n) % fft_len;
                    let mut t = Complex64::new(0.0, 0.0);
                    let mut p12 = 0.0;
                    let mut p3 = 0.0;
                    for y in spectra {
                        let a = y[m] * y[n];
                        t += a * y[s].conj();
                        if with_power {
                            p12 += a.norm_sqr();
                            p3 += y[s].norm_sqr();
                        }
                    }
                    (t / k, p12 / k, p3 / k)
                })
                .collect()
        })
        .collect();

    let mut triple = vec![Complex64::new(0.0, 0.0); dim * dim];
    let mut p12 = vec![0.0; if with_power { dim * dim } else { 0 }];
    let mut p3 = p12.clone();
    for (m, row) in rows.into_iter().enumerate() {
        for (n, (t, a, b)) in row.into_iter().enumerate() {
            triple[m * dim + n] = t;
            triple[n * dim + m] = t;
            if with_power {
                p12[m * dim + n] = a;
                p12[n * dim + m] = a;
                p3[m * dim + n] = b;
                p3[n * dim + m] = b;
            }
        }
    }
    Moments {
        dim,
        triple,
        p12,
        p3,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BispectrumGrid {
    values: Vec<Complex64>,
    dim: usize,
    fft_len: usize,
    segment_count: usize,
}

impl BispectrumGrid {
    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    /// Grid side, `F/2 + 1`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.values[m * self.dim + n]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Location and magnitude of the largest principal-domain value.
    pub fn principal_peak(&self) -> ((usize, usize), f64) {
        principal_points(self.fft_len)
            .map(|(m, n)| ((m, n), self.get(m, n).norm()))
            .fold(((0, 0), f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            })
    }

    pub fn principal_mean_magnitude(&self) -> f64 {
        let (sum, count) = principal_points(self.fft_len).fold((0.0, 0usize), |(s, c), (m, n)| {
            (s + self.get(m, n).norm(), c + 1)
        });
        sum / count as f64
    }
}

fn principal_points(fft_len: usize) -> impl Iterator<Item = (usize, usize)> {
    let half = fft_len / 2;
    (0..=half).flat_map(move |m| (0..=m.min(half - m)).map(move |n| (m, n)))
}

/// Segment-averaged triple product `Y(m) Y(n) Y*(m+n)`, smoothed by `smoothing`.
pub fn estimate_bispectrum_direct(
    frames: &FrameSequence,
    fft_len: usize,
    smoothing: &SmoothingWindow,
) -> Result<BispectrumGrid> {
    let spectra = segment_spectra(frames, fft_len)?;
    let mom = accumulate(&spectra, fft_len, false);
    Ok(BispectrumGrid {
        values: smoothing.apply(&mom.triple, mom.dim),
        dim: mom.dim,
        fft_len,
        segment_count: spectra.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicoherenceGrid {
    magnitude: Vec<f64>,
    phase: Vec<f64>,
    dim: usize,
    fft_len: usize,
    segment_count: usize,
    smoothing: SmoothingDescriptor,
}

impl BicoherenceGrid {
    /// Assembles a grid from raw parts. Only shapes are checked, so a grid
    /// that violates the magnitude bound can be built deliberately.
    pub fn from_parts(
        fft_len: usize,
        segment_count: usize,
        smoothing: SmoothingDescriptor,
        magnitude: Vec<f64>,
        phase: Vec<f64>,
    ) -> Result<Self> {
        check_fft_len(fft_len)?;
        let dim = fft_len / 2 + 1;
        if magnitude.len() != dim * dim || phase.len() != dim * dim {
            return Err(Error::ParameterOutOfRange(format!(
                "grid for fft length {fft_len} needs {} points",
                dim * dim
            )));
        }
        Ok(Self {
            magnitude,
            phase,
            dim,
            fft_len,
            segment_count,
            smoothing,
        })
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    pub fn segment_count(&self) -> usize {
        self.segment_count
    }

    pub fn smoothing(&self) -> SmoothingDescriptor {
        self.smoothing
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn magnitude(&self, m: usize, n: usize) -> f64 {
        self.magnitude[m * self.dim + n]
    }

    pub fn phase(&self, m: usize, n: usize) -> f64 {
        self.phase[m * self.dim + n]
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitude
    }

    pub fn phases(&self) -> &[f64] {
        &self.phase
    }

    pub fn principal_points(&self) -> impl Iterator<Item = (usize, usize)> {
        principal_points(self.fft_len)
    }

    pub fn principal_mean(&self) -> f64 {
        let (sum, count) = self
            .principal_points()
            .fold((0.0, 0usize), |(s, c), (m, n)| {
                (s + self.magnitude(m, n), c + 1)
            });
        sum / count as f64
    }

    /// Largest principal-domain magnitude; ties keep the lowest `(m, n)`.
    pub fn principal_peak(&self) -> ((usize, usize), f64) {
        self.principal_points()
            .map(|(m, n)| ((m, n), self.magnitude(m, n)))
            .fold(((0, 0), f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            })
    }

    /// `m,n,magnitude,phase` over the principal domain, row-major in `m` then `n`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,n,magnitude,phase\n");
        for (m, n) in self.principal_points() {
            let _ = writeln!(
                s,
                "{m},{n},{:.12e},{:.12e}",
                self.magnitude(m, n),
                self.phase(m, n)
            );
        }
        s
    }
}

/// Wraps an angle from `atan2` into `(-π, π]`.
pub(crate) fn wrap_phase(p: f64) -> f64 {
    if p <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        p
    }
}

/// Smoothed bicoherence `|W∗T| / (w_max · Σ_{d ∈ supp W} D(m+d, n+d))`,
/// where `T` is the averaged triple product, `D = sqrt(P12·P3)` its pointwise
/// Cauchy-Schwarz bound with `P12 = E|Y(m)Y(n)|²`, `P3 = E|Y(m+n)|²`, and
/// `w_max` the largest stencil weight. Since every weight is at most `w_max`
/// the ratio stays in [0, 1]. Without smoothing this is the usual
/// power-normalized bicoherence. An isolated, fully coupled line reaches 1
/// at its own bin and `w(d)/w_max` around it, so its peak stays sharp.
/// Points with a zero denominator get magnitude 0 and phase 0.
pub fn estimate_bicoherence(
    frames: &FrameSequence,
    fft_len: usize,
    smoothing: &SmoothingWindow,
) -> Result<BicoherenceGrid> {
    if frames.is_empty() {
        return Err(Error::NoActiveFrames);
    }
    if frames.len() < 2 {
        return Err(Error::TooFewSegments {
            needed: 2,
            got: frames.len(),
        });
    }
    let spectra = segment_spectra(frames, fft_len)?;
    let mom = accumulate(&spectra, fft_len, true);
    let dim = mom.dim;
    let bound: Vec<f64> = mom
        .p12
        .iter()
        .zip(&mom.p3)
        .map(|(a, b)| (a * b).sqrt())
        .collect();
    let num = smoothing.apply(&mom.triple, dim);
    let den = apply_taps(&smoothing.flat_envelope(), &bound, dim);

    let mut magnitude = vec![0.0; dim * dim];
    let mut phase = vec![0.0; dim * dim];
    for i in 0..dim * dim {
        if den[i] > 0.0 {
            magnitude[i] = num[i].norm() / den[i];
            phase[i] = wrap_phase(num[i].arg());
        }
    }
    Ok(BicoherenceGrid {
        magnitude,
        phase,
        dim,
        fft_len,
        segment_count: spectra.len(),
        smoothing: smoothing.descriptor(),
    })
}

/// Frames `samples` with the configured segment length and overlap, then
/// estimates the bicoherence.
pub fn bicoherence_of_signal(
    samples: &[f64],
    config: &BicoherenceConfig,
) -> Result<BicoherenceGrid> {
    let hop = crate::audio::hop_for(config.segment_len, config.overlap)?;
    let frames = FrameSequence::from_samples(samples, config.segment_len, hop, 1)?;
    estimate_bicoherence(&frames, config.fft_len, &config.smoothing)
}
