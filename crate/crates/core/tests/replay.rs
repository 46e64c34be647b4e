use std::f64::consts::PI;

use replayguard::fixtures::{standard_speech_fixture, STANDARD_SEEDS};
use replayguard::replay::{spectral_lines_db, HammersteinModel};
use replayguard::selftest::intermodulation_levels;
use replayguard::{
    bicoherence_of_signal, hammerstein_apply, simulate_msm_chain, BicoherenceConfig, MsmChainConfig,
};

#[test]
fn quadratic_model_adds_intermodulation_lines() {
    for seed in 0..3 {
        let levels = intermodulation_levels(&HammersteinModel::default(), seed);
        assert!(levels.iter().all(|&db| db >= 20.0), "{levels:?}");
        let clean = intermodulation_levels(&HammersteinModel::with_gain(0.0), seed);
        assert!(clean.iter().all(|&db| db < 20.0), "{clean:?}");
    }
}

#[test]
fn squared_sine_has_dc_and_second_harmonic_only() {
    let n = 4096;
    let b0 = 200;
    let x: Vec<f64> = (0..n)
        .map(|t| 0.5 * (2.0 * PI * (b0 * t) as f64 / n as f64).cos())
        .collect();
    let model = HammersteinModel::new(vec![1.0], vec![1.0], 0.1).unwrap();
    let y = hammerstein_apply(&x, &model);
    let bins: Vec<usize> = (0..=n / 2).collect();
    let levels = spectral_lines_db(&y, &bins);
    let strong: Vec<usize> = bins
        .iter()
        .copied()
        .filter(|&b| levels[b] > 100.0)
        .collect();
    assert_eq!(strong, vec![0, b0, 2 * b0]);
}

#[test]
fn chain_is_deterministic_and_orders_differ() {
    let x = standard_speech_fixture(4);
    let cfg = MsmChainConfig {
        noise_snr_db: Some(40.0),
        band_limit: Some(0.4),
        ..MsmChainConfig::default()
    };
    let a = simulate_msm_chain(&x, &cfg, 9).unwrap();
    assert_eq!(a, simulate_msm_chain(&x, &cfg, 9).unwrap());
    assert_ne!(a, simulate_msm_chain(&x, &cfg, 10).unwrap());
    let b = simulate_msm_chain(&x, &cfg.clone().with_order(2), 9).unwrap();
    let l2: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum();
    assert!(l2 > 0.0);
}

#[test]
fn replay_raises_recording_bicoherence() {
    let cfg = BicoherenceConfig::default();
    for seed in STANDARD_SEEDS {
        let x = standard_speech_fixture(seed);
        let y = simulate_msm_chain(&x, &MsmChainConfig::default(), seed).unwrap();
        let before = bicoherence_of_signal(&x, &cfg).unwrap().principal_mean();
        let after = bicoherence_of_signal(&y, &cfg).unwrap().principal_mean();
        assert!(after > before, "seed {seed}: {after} <= {before}");
    }
}
