//! Seeded calibration suite: each property runs a small Monte-Carlo check
//! against a frozen band and reports pass/fail.

use crate::audio::{AudioBuffer, FrameSequence};
use crate::bispectrum::{bicoherence_of_signal, BicoherenceConfig, BicoherenceGrid};
use crate::detector::{analyze_recording, DetectorConfig, Verdict};
use crate::fixtures::{
    linear_non_gaussian, standard_speech_fixture, synthesize_qpc_signal_with, white_gaussian,
    QpcSignalOptions, STANDARD_FIXTURE_RATE_HZ,
};
use crate::hinich::{gaussianity_test, hinich_test_signal, HinichConfig};
use crate::replay::{
    hammerstein_apply, simulate_msm_chain, spectral_lines_db, HammersteinModel, MsmChainConfig,
};
use crate::smoothing::SmoothingWindow;

pub const DEFAULT_SEED: u64 = 0;
pub const MAGNITUDE_TOLERANCE: f64 = 1e-9;
/// Accepted Gaussianity rejection rate on white noise at alpha 0.05.
pub const GAUSSIAN_REJECTION_BAND: (f64, f64) = (0.01, 0.10);

/// Deliberate defects used to check that the suite notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scales every bicoherence magnitude by 1.5.
    InflateBicoherence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

struct Ctx {
    seed: u64,
    fault: Option<Fault>,
}

impl Ctx {
    fn trial_seed(&self, i: u64) -> u64 {
        self.seed.wrapping_mul(100_003).wrapping_add(i)
    }

    fn grid(&self, x: &[f64], cfg: &BicoherenceConfig) -> BicoherenceGrid {
        let g = bicoherence_of_signal(x, cfg).expect("selftest inputs are valid");
        match self.fault {
            None => g,
            Some(Fault::InflateBicoherence) => BicoherenceGrid::from_parts(
                g.fft_len(),
                g.segment_count(),
                g.smoothing(),
                g.magnitudes().iter().map(|v| v * 1.5).collect(),
                g.phases().to_vec(),
            )
            .expect("same shape"),
        }
    }
}

type Check = fn(&Ctx) -> Result<String, String>;

const PROPERTIES: &[(&str, Check)] = &[
    ("bicoherence.bound", bound),
    ("bicoherence.symmetry", symmetry),
    ("bicoherence.scale_invariance", scale_invariance),
    ("bicoherence.coupled_peak", coupled_peak),
    ("hinich.gaussian_calibration", gaussian_calibration),
    ("hinich.linear_acceptance", linear_acceptance),
    ("hinich.nonlinear_detection", nonlinear_detection),
    ("replay.identity_chain", identity_chain),
    ("replay.intermodulation_lines", intermodulation_lines),
    ("detector.operating_point", operating_point),
];

pub fn property_names() -> Vec<&'static str> {
    PROPERTIES.iter().map(|(n, _)| *n).collect()
}

pub fn run_selftest(seed: u64, fault: Option<Fault>) -> Vec<PropertyOutcome> {
    let ctx = Ctx { seed, fault };
    PROPERTIES
        .iter()
        .map(|&(name, check)| match check(&ctx) {
            Ok(detail) => PropertyOutcome {
                name,
                passed: true,
                detail,
            },
            Err(detail) => PropertyOutcome {
                name,
                passed: false,
                detail,
            },
        })
        .collect()
}

/// Every magnitude in `[0, 1 + 1e-9]`.
pub fn check_magnitude_bound(grid: &BicoherenceGrid) -> Result<(), String> {
    for (i, &v) in grid.magnitudes().iter().enumerate() {
        if !(0.0..=1.0 + MAGNITUDE_TOLERANCE).contains(&v) {
            let d = grid.dim();
            return Err(format!(
                "magnitude {v} at ({}, {}) outside [0, 1+1e-9]",
                i / d,
                i % d
            ));
        }
    }
    Ok(())
}

fn small_config() -> BicoherenceConfig {
    BicoherenceConfig {
        segment_len: 64,
        fft_len: 64,
        overlap: 0.5,
        smoothing: SmoothingWindow::default(),
    }
}

fn sample_inputs(ctx: &Ctx) -> Vec<Vec<f64>> {
    let n = 64 * 16;
    let mut v = Vec::new();
    for i in 0..4 {
        let s = ctx.trial_seed(i);
        v.push(white_gaussian(n, 1.0, s));
        v.push(linear_non_gaussian(n, s));
        v.push(
            synthesize_qpc_signal_with(
                0.2,
                0.125,
                i % 2 == 0,
                n,
                s,
                QpcSignalOptions {
                    block_len: 64,
                    noise_std: 0.1,
                },
            )
            .expect("valid frequencies"),
        );
    }
    // constant phases: magnitudes reach 1, so any inflation shows
    v.push(
        synthesize_qpc_signal_with(
            0.25,
            0.125,
            true,
            n,
            ctx.trial_seed(9),
            QpcSignalOptions {
                block_len: n,
                noise_std: 0.0,
            },
        )
        .expect("valid frequencies"),
    );
    v
}

fn bound(ctx: &Ctx) -> Result<String, String> {
    let inputs = sample_inputs(ctx);
    for x in &inputs {
        check_magnitude_bound(&ctx.grid(x, &small_config()))?;
    }
    Ok(format!("{} grids within [0, 1+1e-9]", inputs.len()))
}

fn symmetry(ctx: &Ctx) -> Result<String, String> {
    let inputs = sample_inputs(ctx);
    for x in &inputs {
        let g = ctx.grid(x, &small_config());
        for m in 0..g.dim() {
            for n in 0..m {
                let (a, b) = (g.magnitude(m, n), g.magnitude(n, m));
                if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1e-300) {
                    return Err(format!("asymmetric at ({m}, {n}): {a} vs {b}"));
                }
            }
        }
    }
    Ok(format!("{} grids symmetric", inputs.len()))
}

fn scale_invariance(ctx: &Ctx) -> Result<String, String> {
    let inputs = sample_inputs(ctx);
    for x in &inputs {
        let g = ctx.grid(x, &small_config());
        for alpha in [0.01, 7.5] {
            let y: Vec<f64> = x.iter().map(|v| v * alpha).collect();
            let h = ctx.grid(&y, &small_config());
            let worst = g
                .magnitudes()
                .iter()
                .zip(h.magnitudes())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if worst > 1e-9 {
                return Err(format!("scale {alpha} changed a magnitude by {worst:e}"));
            }
        }
    }
    Ok(format!("{} grids scale invariant", inputs.len()))
}

fn coupled_peak(ctx: &Ctx) -> Result<String, String> {
    let cfg = BicoherenceConfig {
        overlap: 0.0,
        ..BicoherenceConfig::default()
    };
    let opts = QpcSignalOptions {
        block_len: 1024,
        noise_std: 0.1,
    };
    let mut worst = f64::INFINITY;
    for i in 0..3 {
        let x = synthesize_qpc_signal_with(
            100.0 / 1024.0,
            60.0 / 1024.0,
            true,
            64 * 1024,
            ctx.trial_seed(i),
            opts,
        )
        .expect("valid frequencies");
        let g = ctx.grid(&x, &cfg);
        check_magnitude_bound(&g)?;
        let (loc, mag) = g.principal_peak();
        if loc != (100, 60) || mag < 0.9 {
            return Err(format!(
                "peak {mag:.4} at {loc:?}, expected >= 0.9 at (100, 60)"
            ));
        }
        worst = worst.min(mag);
    }
    Ok(format!("peaks on (100, 60), smallest {worst:.4}"))
}

fn gaussian_calibration(ctx: &Ctx) -> Result<String, String> {
    let cfg = HinichConfig::default();
    let trials = 200;
    let rejected = (0..trials)
        .filter(|&i| {
            let x = white_gaussian(128 * 64, 1.0, ctx.trial_seed(i));
            let frames = FrameSequence::from_samples(&x, 128, 128, 1).expect("long enough");
            gaussianity_test(&frames, &cfg)
                .expect("noise is not degenerate")
                .gaussianity_rejected
        })
        .count();
    let rate = rejected as f64 / trials as f64;
    let (lo, hi) = GAUSSIAN_REJECTION_BAND;
    if (lo..=hi).contains(&rate) {
        Ok(format!("rejection rate {rate:.3}"))
    } else {
        Err(format!("rejection rate {rate:.3} outside [{lo}, {hi}]"))
    }
}

fn linear_acceptance(ctx: &Ctx) -> Result<String, String> {
    let cfg = HinichConfig::default();
    let trials = 20;
    let linear = (0..trials)
        .filter(|&i| {
            let x = linear_non_gaussian(128 * 128, ctx.trial_seed(i));
            hinich_test_signal(&x, &cfg)
                .expect("valid input")
                .linearity_rejected
                == Some(false)
        })
        .count();
    if linear * 10 >= trials as usize * 8 {
        Ok(format!("{linear}/{trials} accepted as linear"))
    } else {
        Err(format!(
            "only {linear}/{trials} accepted as linear, need 80%"
        ))
    }
}

/// Unit-variance linear process through the two-device chain at gain 0.15.
pub fn nonlinear_fixture(seed: u64) -> Vec<f64> {
    let x = linear_non_gaussian(128 * 128, seed);
    let sd = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
    let x: Vec<f64> = x.iter().map(|v| v / sd).collect();
    simulate_msm_chain(&x, &MsmChainConfig::with_gain(0.15), seed).expect("valid chain")
}

fn nonlinear_detection(ctx: &Ctx) -> Result<String, String> {
    let cfg = HinichConfig::default();
    let trials = 20;
    let hit = (0..trials)
        .filter(|&i| {
            let y = nonlinear_fixture(ctx.trial_seed(i));
            hinich_test_signal(&y, &cfg)
                .expect("valid input")
                .linearity_rejected
                == Some(true)
        })
        .count();
    if hit * 10 >= trials as usize * 9 {
        Ok(format!("{hit}/{trials} declared nonlinear"))
    } else {
        Err(format!("only {hit}/{trials} declared nonlinear, need 90%"))
    }
}

fn identity_chain(ctx: &Ctx) -> Result<String, String> {
    let x = standard_speech_fixture(ctx.trial_seed(0));
    for order in [1, 2] {
        let y = simulate_msm_chain(&x, &MsmChainConfig::identity().with_order(order), ctx.seed)
            .map_err(|e| e.to_string())?;
        if y != x {
            return Err(format!(
                "identity chain of order {order} changed the signal"
            ));
        }
    }
    Ok("identity chain is exact for orders 1 and 2".into())
}

const WARMUP: usize = 256;

/// Two bin-aligned tones plus faint noise, with a warm-up prefix so a causal
/// filter's start-up transient can be dropped before the spectrum is taken.
pub fn two_tone(n: usize, b1: usize, b2: usize, seed: u64) -> Vec<f64> {
    let noise = white_gaussian(n + WARMUP, 1e-3, seed);
    (0..n + WARMUP)
        .map(|t| {
            let w = 2.0 * std::f64::consts::PI * t as f64 / n as f64;
            0.4 * (w * b1 as f64).cos() + 0.4 * (w * b2 as f64).cos() + noise[t]
        })
        .collect()
}

/// Levels (dB above floor) of the DC, `f1 ± f2`, `2f1` and `2f2` lines at the
/// output of `model` for a two-tone input.
pub fn intermodulation_levels(model: &HammersteinModel, seed: u64) -> Vec<f64> {
    let (n, b1, b2) = (8192, 800, 480);
    let lines = [0, b1 + b2, b1 - b2, 2 * b1, 2 * b2];
    let y = hammerstein_apply(&two_tone(n, b1, b2, seed), model);
    spectral_lines_db(&y[WARMUP..], &lines)
}

fn intermodulation_lines(ctx: &Ctx) -> Result<String, String> {
    let distorted = intermodulation_levels(&HammersteinModel::default(), ctx.trial_seed(0));
    let linear = intermodulation_levels(&HammersteinModel::with_gain(0.0), ctx.trial_seed(0));
    let weakest = distorted.iter().cloned().fold(f64::INFINITY, f64::min);
    let strongest_clean = linear.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if weakest < 20.0 {
        return Err(format!(
            "weakest distortion line only {weakest:.1} dB above floor"
        ));
    }
    if strongest_clean >= 20.0 {
        return Err(format!(
            "linear model shows a line {strongest_clean:.1} dB above floor"
        ));
    }
    Ok(format!(
        "lines >= {weakest:.1} dB with distortion, <= {strongest_clean:.1} dB without"
    ))
}

fn operating_point(ctx: &Ctx) -> Result<String, String> {
    let cfg = DetectorConfig::default();
    let mut worst = (0.0f64, 1.0f64);
    for i in 0..2 {
        let s = ctx.trial_seed(i);
        let x = standard_speech_fixture(s);
        let y = simulate_msm_chain(&x, &MsmChainConfig::default(), s).map_err(|e| e.to_string())?;
        let run = |v: Vec<f64>| {
            AudioBuffer::new(v, STANDARD_FIXTURE_RATE_HZ)
                .and_then(|b| analyze_recording(&b, &cfg))
                .map_err(|e| e.to_string())
        };
        let (clean, replay) = (run(x)?, run(y)?);
        if clean.failing_fraction >= 0.35 || clean.verdict != Verdict::Genuine {
            return Err(format!(
                "clean failing fraction {:.3}",
                clean.failing_fraction
            ));
        }
        if replay.failing_fraction < 0.9 || replay.verdict != Verdict::Replay {
            return Err(format!(
                "replay failing fraction {:.3}",
                replay.failing_fraction
            ));
        }
        worst = (
            worst.0.max(clean.failing_fraction),
            worst.1.min(replay.failing_fraction),
        );
    }
    Ok(format!("clean <= {:.3}, replay >= {:.3}", worst.0, worst.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut n = property_names();
        n.sort();
        n.dedup();
        assert_eq!(n.len(), PROPERTIES.len());
    }

    #[test]
    fn bound_check_names_location() {
        let g = BicoherenceGrid::from_parts(
            4,
            2,
            SmoothingWindow::none().descriptor(),
            vec![0.0, 0.0, 0.0, 0.0, 1.2, 0.0, 0.0, 0.0, 0.0],
            vec![0.0; 9],
        )
        .unwrap();
        let e = check_magnitude_bound(&g).unwrap_err();
        assert!(e.contains("(1, 1)"));
    }
}
