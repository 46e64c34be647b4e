//! Hinich bispectral Gaussianity and linearity tests.
//!
//! Both tests use the unsmoothed power-normalized squared bicoherence `b²`
//! on the interior of the principal domain (`m, n >= 1`, `m + n < F/2`),
//! where under the Gaussian null `2K·b²` is asymptotically χ²(2) and
//! independent across points. Segments must not overlap, otherwise that
//! independence (and the calibration) is lost.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::audio::FrameSequence;
use crate::bispectrum::{accumulate, segment_spectra};
use crate::error::{Error, Result};

pub const MIN_SEGMENTS: usize = 8;
pub const DEFAULT_SEGMENT_LEN: usize = 128;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_LINEARITY_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HinichConfig {
    /// Length (and FFT size) of the non-overlapping segments.
    pub segment_len: usize,
    pub alpha: f64,
    /// Linearity is rejected when the sample IQR of `2K·b²` differs from
    /// its linear-model reference by more than this factor, either way.
    pub linearity_factor: f64,
}

impl Default for HinichConfig {
    fn default() -> Self {
        Self {
            segment_len: DEFAULT_SEGMENT_LEN,
            alpha: DEFAULT_ALPHA,
            linearity_factor: DEFAULT_LINEARITY_FACTOR,
        }
    }
}

impl HinichConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segment_len < 8 || !self.segment_len.is_multiple_of(2) {
            return Err(Error::ParameterOutOfRange(format!(
                "hinich segment length must be even and >= 8, got {}",
                self.segment_len
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::ParameterOutOfRange(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.linearity_factor.is_finite() && self.linearity_factor > 1.0) {
            return Err(Error::ParameterOutOfRange(format!(
                "linearity factor must be > 1, got {}",
                self.linearity_factor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HinichDecision {
    Gaussian,
    NonGaussianLinear,
    NonGaussianNonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HinichResult {
    pub segment_count: usize,
    pub gaussianity_stat: f64,
    pub gaussianity_dof: usize,
    pub gaussianity_pvalue: f64,
    pub gaussianity_rejected: bool,
    pub linearity_stat: Option<f64>,
    pub linearity_reference: Option<f64>,
    pub noncentrality: Option<f64>,
    pub linearity_rejected: Option<bool>,
    /// `None` while the linearity portion is pending.
    pub decision: Option<HinichDecision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// Bispectrum zero or constant. `gaussian` marks the zero case.
    H0 { gaussian: bool },
    /// Bispectrum nonzero and not constant.
    H1,
}

/// Per-frame export record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HinichFrameRecord {
    pub frame_index: usize,
    pub gaussianity_stat: f64,
    pub gaussianity_pvalue: f64,
    pub linearity_stat: Option<f64>,
    pub linearity_reference: Option<f64>,
    pub decision: HinichDecision,
}

impl HinichFrameRecord {
    pub fn new(frame_index: usize, r: &HinichResult) -> Self {
        Self {
            frame_index,
            gaussianity_stat: r.gaussianity_stat,
            gaussianity_pvalue: r.gaussianity_pvalue,
            linearity_stat: r.linearity_stat,
            linearity_reference: r.linearity_reference,
            decision: r.decision.unwrap_or(HinichDecision::Gaussian),
        }
    }
}

/// `2K·b²` at every interior principal-domain point with nonzero power.
fn skewness_statistics(frames: &FrameSequence) -> Result<(Vec<f64>, usize)> {
    let k = frames.len();
    if k < MIN_SEGMENTS {
        return Err(Error::TooFewSegments {
            needed: MIN_SEGMENTS,
            got: k,
        });
    }
    let f = frames.frame_len();
    if f < 8 || !f.is_multiple_of(2) {
        return Err(Error::ParameterOutOfRange(format!(
            "segment length must be even and >= 8, got {f}"
        )));
    }
    let spectra = segment_spectra(frames, f)?;
    let mom = accumulate(&spectra, f, true);
    let half = f / 2;
    let mut z = Vec::new();
    for m in 1..half {
        for n in 1..=m {
            if m + n >= half {
                break;
            }
            let i = m * mom.dim + n;
            let den = mom.p12[i] * mom.p3[i];
            if den > 0.0 {
                z.push(2.0 * k as f64 * mom.triple[i].norm_sqr() / den);
            }
        }
    }
    if z.is_empty() {
        return Err(Error::DegenerateInput);
    }
    Ok((z, k))
}

fn gaussianity_from(z: &[f64], k: usize, alpha: f64) -> HinichResult {
    let stat: f64 = z.iter().sum();
    let dof = 2 * z.len();
    let pvalue = ChiSquared::new(dof as f64)
        .expect("dof is positive")
        .sf(stat)
        .clamp(0.0, 1.0);
    let rejected = pvalue < alpha;
    HinichResult {
        segment_count: k,
        gaussianity_stat: stat,
        gaussianity_dof: dof,
        gaussianity_pvalue: pvalue,
        gaussianity_rejected: rejected,
        linearity_stat: None,
        linearity_reference: None,
        noncentrality: None,
        linearity_rejected: None,
        decision: if rejected {
            None
        } else {
            Some(HinichDecision::Gaussian)
        },
    }
}

fn linearity_from(z: &[f64], factor: f64, mut r: HinichResult) -> HinichResult {
    let lambda = (z.iter().sum::<f64>() / z.len() as f64 - 2.0).max(0.0);
    let stat = sample_iqr(z);
    let reference = ncx2_iqr(lambda);
    let rejected = (stat / reference).ln().abs() > factor.ln();
    r.linearity_stat = Some(stat);
    r.linearity_reference = Some(reference);
    r.noncentrality = Some(lambda);
    r.linearity_rejected = Some(rejected);
    r.decision = Some(if rejected {
        HinichDecision::NonGaussianNonlinear
    } else {
        HinichDecision::NonGaussianLinear
    });
    r
}

/// Gaussianity (zero-skewness) test. `frames` are the analysis segments;
/// each is transformed at its own length.
pub fn gaussianity_test(frames: &FrameSequence, config: &HinichConfig) -> Result<HinichResult> {
    config.validate()?;
    let (z, k) = skewness_statistics(frames)?;
    Ok(gaussianity_from(&z, k, config.alpha))
}

/// Linearity test on the same segments as `prior`, which must have rejected
/// Gaussianity.
pub fn linearity_test(
    frames: &FrameSequence,
    config: &HinichConfig,
    prior: &HinichResult,
) -> Result<HinichResult> {
    config.validate()?;
    if !prior.gaussianity_rejected {
        return Err(Error::TestOrderViolation);
    }
    let (z, _) = skewness_statistics(frames)?;
    Ok(linearity_from(&z, config.linearity_factor, prior.clone()))
}

/// Both tests in hierarchy order, sharing one bicoherence estimate.
pub fn hinich_test(frames: &FrameSequence, config: &HinichConfig) -> Result<HinichResult> {
    config.validate()?;
    let (z, k) = skewness_statistics(frames)?;
    let g = gaussianity_from(&z, k, config.alpha);
    if !g.gaussianity_rejected {
        return Ok(g);
    }
    Ok(linearity_from(&z, config.linearity_factor, g))
}

/// Splits `samples` into non-overlapping `config.segment_len` segments and
/// runs [`hinich_test`].
pub fn hinich_test_signal(samples: &[f64], config: &HinichConfig) -> Result<HinichResult> {
    config.validate()?;
    let frames = FrameSequence::from_samples(samples, config.segment_len, config.segment_len, 1)?;
    hinich_test(&frames, config)
}

pub fn hypothesis_from(
    gaussianity_rejected: bool,
    linearity_rejected: Option<bool>,
) -> Result<Hypothesis> {
    match (gaussianity_rejected, linearity_rejected) {
        (false, _) => Ok(Hypothesis::H0 { gaussian: true }),
        (true, Some(true)) => Ok(Hypothesis::H1),
        (true, Some(false)) => Ok(Hypothesis::H0 { gaussian: false }),
        (true, None) => Err(Error::IncompleteResult),
    }
}

pub fn decide_hypothesis(result: &HinichResult) -> Result<Hypothesis> {
    hypothesis_from(result.gaussianity_rejected, result.linearity_rejected)
}

/// Linear-interpolated sample quantile (the "type 7" definition).
pub fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sample_iqr(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    sample_quantile(&v, 0.75) - sample_quantile(&v, 0.25)
}

/// CDF of the noncentral χ² with 2 degrees of freedom, as a Poisson mixture
/// of central χ²(2 + 2j) laws.
pub fn ncx2_df2_cdf(x: f64, lambda: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if lambda <= 0.0 {
        return 1.0 - (-x / 2.0).exp();
    }
    let mu = lambda / 2.0;
    let spread = 12.0 * mu.sqrt() + 30.0;
    let lo = (mu - spread).max(0.0).floor() as u64;
    let hi = (mu + spread).ceil() as u64;
    let mut acc = 0.0;
    for j in lo..=hi {
        let jf = j as f64;
        let lw = -mu + jf * mu.ln() - ln_gamma(jf + 1.0);
        acc += lw.exp() * gamma_lr(1.0 + jf, x / 2.0);
    }
    acc.clamp(0.0, 1.0)
}

pub fn ncx2_df2_quantile(p: f64, lambda: f64) -> f64 {
    let mut hi = 4.0 + 2.0 * lambda.max(0.0);
    while ncx2_df2_cdf(hi, lambda) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ncx2_df2_cdf(mid, lambda) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Interquartile range of noncentral χ²(2, λ).
pub fn ncx2_iqr(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        // exponential with mean 2
        return 2.0 * 3f64.ln();
    }
    ncx2_df2_quantile(0.75, lambda) - ncx2_df2_quantile(0.25, lambda)
}
