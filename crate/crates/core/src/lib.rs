//! Higher-order spectral analysis for audio replay detection.

pub mod audio;
pub mod bispectrum;
pub mod cumulant;
pub mod detector;
pub mod error;
pub mod fixtures;
pub mod hinich;
pub mod qpc;
pub mod replay;
pub mod selftest;
pub mod smoothing;

pub use audio::{
    frame_signal, gate_silence, read_wav, write_wav, AudioBuffer, FrameActivity, FrameSequence,
};
pub use bispectrum::{
    bicoherence_of_signal, estimate_bicoherence, estimate_bispectrum_direct, principal_domain_mask,
    BicoherenceConfig, BicoherenceGrid, BispectrumGrid,
};
pub use cumulant::{third_order_cumulant, CumulantLagPair};
pub use detector::{
    analyze_recording, classify, compare_recordings, phase_bias_score, recording_bicoherence,
    ComparisonSummary, DecisionRule, DetectionReport, DetectorConfig, FrameFeatures, Verdict,
};
pub use error::{Error, Result};
pub use hinich::{
    decide_hypothesis, gaussianity_test, hinich_test, hinich_test_signal, linearity_test,
    HinichConfig, HinichDecision, HinichFrameRecord, HinichResult, Hypothesis,
};
pub use qpc::{
    detect_qpc_peaks, qpc_scatter, qpc_shift_metric, QpcConfig, QpcPeak, QpcScatter, RecordingLabel,
};
pub use replay::{hammerstein_apply, simulate_msm_chain, HammersteinModel, MsmChainConfig};
pub use smoothing::{rao_gabr_window, SmoothingKind, SmoothingWindow};
