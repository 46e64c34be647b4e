use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),

    #[error("input too short: need at least {needed} samples, got {got}")]
    InputTooShort { needed: usize, got: usize },

    #[error("lag ({k1}, {k2}) out of range for frame of length {len}")]
    LagOutOfRange { k1: i64, k2: i64, len: usize },

    #[error("no active (non-silent) frames")]
    NoActiveFrames,

    #[error("too few segments: need at least {needed}, got {got}")]
    TooFewSegments { needed: usize, got: usize },

    #[error("signal has zero power; higher-order statistics are undefined")]
    DegenerateInput,

    #[error("linearity test requires a prior Gaussianity rejection")]
    TestOrderViolation,

    #[error("hypothesis decision needs both test portions populated")]
    IncompleteResult,

    #[error("empty QPC scatter")]
    EmptyScatter,

    #[error("frequency out of range: {0}")]
    FrequencyOutOfRange(String),

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("invalid chain config: {0}")]
    ChainConfig(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
