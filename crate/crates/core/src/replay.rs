//! Hammerstein device models and the Mic-Speaker-Mic replay chain.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DEVICE_TAPS: usize = 32;
pub const DEFAULT_DEVICE_CUTOFF: f64 = 0.45;
pub const DEFAULT_QUADRATIC_GAIN: f64 = 0.05;
pub const BAND_LIMIT_TAPS: usize = 63;

/// Hamming-windowed sinc low-pass with unit DC gain. `cutoff` is in cycles
/// per sample, in (0, 0.5).
pub fn windowed_sinc_lowpass(taps: usize, cutoff: f64) -> Result<Vec<f64>> {
    if taps == 0 || !(cutoff > 0.0 && cutoff < 0.5) {
        return Err(Error::ParameterOutOfRange(format!(
            "low-pass needs taps >= 1 and cutoff in (0, 0.5), got {taps} taps at {cutoff}"
        )));
    }
    let centre = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let t = i as f64 - centre;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * std::f64::consts::PI * cutoff * t).sin() / (std::f64::consts::PI * t)
            };
            let w = if taps == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (taps - 1) as f64).cos()
            };
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    for v in &mut h {
        *v /= sum;
    }
    Ok(h)
}

/// Causal FIR filtering with zero history, output truncated to `x.len()`.
pub fn fir_filter(kernel: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| {
            kernel
                .iter()
                .take(n + 1)
                .enumerate()
                .fold(0.0, |acc, (k, &g)| acc + g * x[n - k])
        })
        .collect()
}

/// `y = g1 ∗ x + quadratic_gain · (g2 ∗ x²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HammersteinModel {
    pub linear_kernel: Vec<f64>,
    pub quadratic_kernel: Vec<f64>,
    pub quadratic_gain: f64,
    /// Clip the output to [-1, 1].
    #[serde(default)]
    pub clip: bool,
}

impl HammersteinModel {
    pub fn new(
        linear_kernel: Vec<f64>,
        quadratic_kernel: Vec<f64>,
        quadratic_gain: f64,
    ) -> Result<Self> {
        let m = Self {
            linear_kernel,
            quadratic_kernel,
            quadratic_gain,
            clip: false,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn identity() -> Self {
        Self {
            linear_kernel: vec![1.0],
            quadratic_kernel: vec![0.0],
            quadratic_gain: 0.0,
            clip: false,
        }
    }

    /// The default device with a different quadratic gain.
    pub fn with_gain(quadratic_gain: f64) -> Self {
        Self {
            quadratic_gain,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.linear_kernel.is_empty() || self.quadratic_kernel.is_empty() {
            return Err(Error::ChainConfig("kernels must be non-empty".into()));
        }
        let finite = self
            .linear_kernel
            .iter()
            .chain(&self.quadratic_kernel)
            .chain(std::iter::once(&self.quadratic_gain))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::ChainConfig("kernels and gain must be finite".into()));
        }
        Ok(())
    }
}

impl Default for HammersteinModel {
    fn default() -> Self {
        Self {
            linear_kernel: windowed_sinc_lowpass(DEFAULT_DEVICE_TAPS, DEFAULT_DEVICE_CUTOFF)
                .expect("default low-pass parameters are valid"),
            quadratic_kernel: vec![1.0],
            quadratic_gain: DEFAULT_QUADRATIC_GAIN,
            clip: false,
        }
    }
}

pub fn hammerstein_apply(x: &[f64], model: &HammersteinModel) -> Vec<f64> {
    let mut y = fir_filter(&model.linear_kernel, x);
    if model.quadratic_gain != 0.0 {
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        for (yi, qi) in y.iter_mut().zip(fir_filter(&model.quadratic_kernel, &sq)) {
            *yi += model.quadratic_gain * qi;
        }
    }
    if model.clip {
        for v in &mut y {
            *v = v.clamp(-1.0, 1.0);
        }
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsmChainConfig {
    pub speaker: HammersteinModel,
    pub mic: HammersteinModel,
    pub noise_snr_db: Option<f64>,
    /// Normalized low-pass cutoff between speaker and mic.
    pub band_limit: Option<f64>,
    pub replay_order: u8,
}

impl Default for MsmChainConfig {
    fn default() -> Self {
        Self {
            speaker: HammersteinModel::default(),
            mic: HammersteinModel::default(),
            noise_snr_db: None,
            band_limit: None,
            replay_order: 1,
        }
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|t| {
            t.trim().parse::<f64>().map_err(|_| {
                Error::ChainConfig(format!("{key}: cannot parse '{}' as a number", t.trim()))
            })
        })
        .collect()
}

fn parse_num(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::ChainConfig(format!("{key}: cannot parse '{v}' as a number")))
}

fn parse_opt(key: &str, v: &str) -> Result<Option<f64>> {
    if v.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

impl MsmChainConfig {
    pub fn identity() -> Self {
        Self {
            speaker: HammersteinModel::identity(),
            mic: HammersteinModel::identity(),
            noise_snr_db: None,
            band_limit: None,
            replay_order: 1,
        }
    }

    pub fn with_gain(quadratic_gain: f64) -> Self {
        Self {
            speaker: HammersteinModel::with_gain(quadratic_gain),
            mic: HammersteinModel::with_gain(quadratic_gain),
            ..Self::default()
        }
    }

    pub fn with_order(mut self, order: u8) -> Self {
        self.replay_order = order;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.speaker.validate()?;
        self.mic.validate()?;
        if !(1..=2).contains(&self.replay_order) {
            return Err(Error::ChainConfig(format!(
                "replay order must be 1 or 2, got {}",
                self.replay_order
            )));
        }
        if let Some(s) = self.noise_snr_db {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::ChainConfig(format!(
                    "snr_db must be positive, got {s}"
                )));
            }
        }
        if let Some(b) = self.band_limit {
            if !(b > 0.0 && b < 0.5) {
                return Err(Error::ChainConfig(format!(
                    "band_limit must be in (0, 0.5), got {b}"
                )));
            }
        }
        Ok(())
    }

    /// Parses the flat `key = value` format. Unlisted keys keep their
    /// defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::ChainConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let device = |cfg: &mut Self, prefix: &str| -> Option<HammersteinModel> {
                match prefix {
                    "speaker" => Some(cfg.speaker.clone()),
                    "mic" => Some(cfg.mic.clone()),
                    _ => None,
                }
            };
            match key {
                "snr_db" => cfg.noise_snr_db = parse_opt(key, value)?,
                "band_limit" => cfg.band_limit = parse_opt(key, value)?,
                "order" => {
                    cfg.replay_order = value
                        .parse::<u8>()
                        .map_err(|_| Error::ChainConfig(format!("order: cannot parse '{value}'")))?
                }
                _ => {
                    let (prefix, field) = key
                        .split_once('.')
                        .ok_or_else(|| Error::ChainConfig(format!("unknown key '{key}'")))?;
                    let mut dev = device(&mut cfg, prefix)
                        .ok_or_else(|| Error::ChainConfig(format!("unknown key '{key}'")))?;
                    match field {
                        "g1" => dev.linear_kernel = parse_list(key, value)?,
                        "g2" => dev.quadratic_kernel = parse_list(key, value)?,
                        "qgain" => dev.quadratic_gain = parse_num(key, value)?,
                        "clip" => {
                            dev.clip = value.parse::<bool>().map_err(|_| {
                                Error::ChainConfig(format!("{key}: expected true or false"))
                            })?
                        }
                        _ => return Err(Error::ChainConfig(format!("unknown key '{key}'"))),
                    }
                    if prefix == "speaker" {
                        cfg.speaker = dev;
                    } else {
                        cfg.mic = dev;
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, dev) in [("speaker", &self.speaker), ("mic", &self.mic)] {
            let _ = writeln!(s, "{name}.g1 = {}", fmt_list(&dev.linear_kernel));
            let _ = writeln!(s, "{name}.g2 = {}", fmt_list(&dev.quadratic_kernel));
            let _ = writeln!(s, "{name}.qgain = {:?}", dev.quadratic_gain);
            let _ = writeln!(s, "{name}.clip = {}", dev.clip);
        }
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:?}"));
        let _ = writeln!(s, "snr_db = {}", opt(self.noise_snr_db));
        let _ = writeln!(s, "band_limit = {}", opt(self.band_limit));
        let _ = writeln!(s, "order = {}", self.replay_order);
        s
    }
}

/// Adds white Gaussian noise scaled so that its sample power sits exactly
/// `snr_db` below the sample power of `x`.
pub fn add_noise_at_snr(x: &mut [f64], snr_db: f64, rng: &mut ChaCha8Rng) {
    let noise: Vec<f64> = (0..x.len()).map(|_| StandardNormal.sample(rng)).collect();
    let ps = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    let pn = noise.iter().map(|v| v * v).sum::<f64>() / noise.len().max(1) as f64;
    if ps == 0.0 || pn == 0.0 {
        return;
    }
    let scale = (ps / pn / 10f64.powf(snr_db / 10.0)).sqrt();
    for (v, e) in x.iter_mut().zip(noise) {
        *v += scale * e;
    }
}

/// Speaker, optional band limit, optional noise, mic; repeated
/// `replay_order` times. Deterministic in `(x, config, seed)`.
pub fn simulate_msm_chain(x: &[f64], config: &MsmChainConfig, seed: u64) -> Result<Vec<f64>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = config
        .band_limit
        .map(|c| windowed_sinc_lowpass(BAND_LIMIT_TAPS, c))
        .transpose()?;
    let mut y = x.to_vec();
    for _ in 0..config.replay_order {
        y = hammerstein_apply(&y, &config.speaker);
        if let Some(h) = &band {
            y = fir_filter(h, &y);
        }
        if let Some(snr) = config.noise_snr_db {
            add_noise_at_snr(&mut y, snr, &mut rng);
        }
        y = hammerstein_apply(&y, &config.mic);
    }
    Ok(y)
}

/// Level of each requested DFT bin of `x` above the noise floor, in dB. The
/// floor is the median power over bins `0..=N/2`. Rectangular window, so
/// lines should be bin-aligned.
pub fn spectral_lines_db(x: &[f64], bins: &[usize]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect();
    let mut sorted = power.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[sorted.len() / 2].max(f64::MIN_POSITIVE);
    bins.iter()
        .map(|&b| 10.0 * (power[b].max(f64::MIN_POSITIVE) / floor).log10())
        .collect()
}
