//! Seeded synthetic test signals.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};

pub const DEFAULT_QPC_BLOCK_LEN: usize = 1024;

/// Speech-like fixture defaults: fundamental on bin 1 of a 128-point
/// transform, odd harmonics up to 57 (0.445 normalized).
pub const SPEECH_F0: f64 = 1.0 / 128.0;
pub const SPEECH_HARMONICS: usize = 57;
pub const SPEECH_NOISE_MIX: f64 = 0.01;
pub const SPEECH_PEAK: f64 = 0.9;
/// Raised-cosine onset, so filters downstream start from rest smoothly.
pub const SPEECH_FADE_LEN: usize = 1024;

/// Length and seeds of the standard fixture set.
pub const STANDARD_FIXTURE_LEN: usize = 32_000;
pub const STANDARD_FIXTURE_RATE_HZ: u32 = 8_000;
pub const STANDARD_SEEDS: std::ops::Range<u64> = 0..10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpcSignalOptions {
    /// Samples per block of constant phases.
    pub block_len: usize,
    /// Standard deviation of additive white Gaussian noise.
    pub noise_std: f64,
}

impl Default for QpcSignalOptions {
    fn default() -> Self {
        Self {
            block_len: DEFAULT_QPC_BLOCK_LEN,
            noise_std: 0.0,
        }
    }
}

/// Unit-amplitude tones at `f1`, `f2` and `f1 + f2`. Phases are redrawn
/// every block; when `coupled`, the third phase is the sum of the other two,
/// otherwise it is independent.
pub fn synthesize_qpc_signal(
    f1: f64,
    f2: f64,
    coupled: bool,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    synthesize_qpc_signal_with(f1, f2, coupled, n, seed, QpcSignalOptions::default())
}

pub fn synthesize_qpc_signal_with(
    f1: f64,
    f2: f64,
    coupled: bool,
    n: usize,
    seed: u64,
    opts: QpcSignalOptions,
) -> Result<Vec<f64>> {
    if !(f1 > 0.0 && f2 > 0.0 && f1 + f2 < 0.5) {
        return Err(Error::FrequencyOutOfRange(format!(
            "need 0 < f1, f2 and f1 + f2 < 0.5, got f1={f1}, f2={f2}"
        )));
    }
    if opts.block_len == 0 || opts.noise_std.is_nan() || opts.noise_std < 0.0 {
        return Err(Error::ParameterOutOfRange(
            "block_len must be positive, noise_std nonnegative".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f3 = f1 + f2;
    let mut out = Vec::with_capacity(n);
    let mut phases = (0.0, 0.0, 0.0);
    for t in 0..n {
        if t % opts.block_len == 0 {
            let a = rng.random_range(0.0..2.0 * PI);
            let b = rng.random_range(0.0..2.0 * PI);
            let c = rng.random_range(0.0..2.0 * PI);
            phases = (a, b, if coupled { a + b } else { c });
        }
        let tt = t as f64;
        let mut v = (2.0 * PI * f1 * tt + phases.0).cos()
            + (2.0 * PI * f2 * tt + phases.1).cos()
            + (2.0 * PI * f3 * tt + phases.2).cos();
        if opts.noise_std > 0.0 {
            let e: f64 = StandardNormal.sample(&mut rng);
            v += opts.noise_std * e;
        }
        out.push(v);
    }
    Ok(out)
}

fn unit_rms(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let rms = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64).sqrt();
    if rms > 0.0 {
        for v in x.iter_mut() {
            *v = (*v - mean) / rms;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeechOptions {
    /// Raised-cosine fade-in length, capped at half the signal.
    pub fade_len: usize,
}

impl Default for SpeechOptions {
    fn default() -> Self {
        Self {
            fade_len: SPEECH_FADE_LEN,
        }
    }
}

/// Odd-harmonic stack at `f0` with amplitudes `U(0.3, 1)/sqrt(k)` and random
/// constant phases, mixed with mean-removed exponential noise:
/// `(1 - noise_mix)·h + noise_mix·e` with both parts at unit RMS. A
/// raised-cosine fade-in is applied and the result scaled to peak 0.9.
///
/// Only odd harmonics are used: sums and differences of odd multiples land
/// on even multiples, which are empty, so quadratic distortion shows up as
/// new phase-coupled lines rather than being hidden under existing ones.
pub fn synthesize_speech_like(
    f0: f64,
    harmonics: usize,
    noise_mix: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    synthesize_speech_like_with(f0, harmonics, noise_mix, n, seed, SpeechOptions::default())
}

pub fn synthesize_speech_like_with(
    f0: f64,
    harmonics: usize,
    noise_mix: f64,
    n: usize,
    seed: u64,
    opts: SpeechOptions,
) -> Result<Vec<f64>> {
    if f0.is_nan() || f0 <= 0.0 || harmonics == 0 || f0 * harmonics as f64 >= 0.5 {
        return Err(Error::ParameterOutOfRange(format!(
            "need f0 > 0, harmonics >= 1 and f0·harmonics < 0.5, got f0={f0}, harmonics={harmonics}"
        )));
    }
    if !(0.0..=1.0).contains(&noise_mix) {
        return Err(Error::ParameterOutOfRange(format!(
            "noise_mix must be in [0, 1], got {noise_mix}"
        )));
    }
    if n < 2 {
        return Err(Error::InputTooShort { needed: 2, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = vec![0.0; n];
    for k in (1..=harmonics).step_by(2) {
        let amp = rng.random_range(0.3..1.0) / (k as f64).sqrt();
        let phase = rng.random_range(0.0..2.0 * PI);
        let w = 2.0 * PI * f0 * k as f64;
        for (t, v) in h.iter_mut().enumerate() {
            *v += amp * (w * t as f64 + phase).cos();
        }
    }
    unit_rms(&mut h);
    let mut s = h;
    if noise_mix > 0.0 {
        let mut e: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
        unit_rms(&mut e);
        for (v, e) in s.iter_mut().zip(e) {
            *v = (1.0 - noise_mix) * *v + noise_mix * e;
        }
    }
    let fade = opts.fade_len.min(n / 2);
    for (t, v) in s.iter_mut().take(fade).enumerate() {
        *v *= 0.5 - 0.5 * (PI * t as f64 / fade as f64).cos();
    }
    let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut s {
            *v *= SPEECH_PEAK / peak;
        }
    }
    Ok(s)
}

/// The standard speech-like fixture for `seed`.
pub fn standard_speech_fixture(seed: u64) -> Vec<f64> {
    synthesize_speech_like(
        SPEECH_F0,
        SPEECH_HARMONICS,
        SPEECH_NOISE_MIX,
        STANDARD_FIXTURE_LEN,
        seed,
    )
    .expect("standard fixture parameters are valid")
}

/// i.i.d. mean-removed unit exponential noise through a short FIR; a linear,
/// non-Gaussian process.
pub fn linear_non_gaussian(n: usize, seed: u64) -> Vec<f64> {
    const FIR: [f64; 4] = [1.0, 0.6, -0.3, 0.2];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e: Vec<f64> = (0..n)
        .map(|_| {
            let v: f64 = Exp1.sample(&mut rng);
            v - 1.0
        })
        .collect();
    crate::replay::fir_filter(&FIR, &e)
}

pub fn white_gaussian(n: usize, std: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut rng);
            std * e
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qpc_bounds() {
        assert!(matches!(
            synthesize_qpc_signal(0.3, 0.2, true, 10, 0),
            Err(Error::FrequencyOutOfRange(_))
        ));
        assert!(matches!(
            synthesize_qpc_signal(0.0, 0.2, true, 10, 0),
            Err(Error::FrequencyOutOfRange(_))
        ));
        assert!(synthesize_qpc_signal(0.2, 0.1, false, 10, 0).is_ok());
    }

    #[test]
    fn qpc_is_deterministic() {
        let a = synthesize_qpc_signal(0.1, 0.05, true, 3000, 7).unwrap();
        assert_eq!(a, synthesize_qpc_signal(0.1, 0.05, true, 3000, 7).unwrap());
        assert_ne!(a, synthesize_qpc_signal(0.1, 0.05, true, 3000, 8).unwrap());
    }

    #[test]
    fn speech_peak_and_params() {
        let x = standard_speech_fixture(3);
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.9).abs() < 1e-6);
        assert!(synthesize_speech_like(0.01, 50, 0.1, 100, 0).is_err());
        assert!(synthesize_speech_like(0.01, 10, 1.5, 100, 0).is_err());
        assert!(synthesize_speech_like(-0.01, 10, 0.1, 100, 0).is_err());
    }

    #[test]
    fn single_harmonic_is_a_sinusoid() {
        let n = 4096;
        let x = synthesize_speech_like(1.0 / 64.0, 1, 0.0, n, 2).unwrap();
        // past the fade the signal is one cosine at f0: x[t+64] = x[t]
        for t in SPEECH_FADE_LEN..n - 64 {
            assert!((x[t + 64] - x[t]).abs() < 1e-9);
        }
    }
}
