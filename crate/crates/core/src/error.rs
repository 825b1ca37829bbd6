//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no draws")]
    NoDraws,

    #[error("probability mass {0} outside (0, 1)")]
    InvalidMass(f64),

    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("score out of range at row {row}: {score}")]
    ScoreOutOfRangeAt { row: usize, score: f64 },

    #[error("label out of range at row {row}: {value}")]
    LabelOutOfRangeAt { row: usize, value: String },

    #[error("malformed row {row}: {line:?}")]
    MalformedRow { row: usize, line: String },

    #[error("empty pool")]
    EmptyPool,

    #[error("sample without label in labeled pool")]
    MissingLabel,

    #[error("degenerate labels")]
    DegenerateLabels,

    #[error("bin count {n_bins} invalid for pool of size {pool_size}")]
    InvalidBinCount { n_bins: usize, pool_size: usize },

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-interior point")]
    NonInteriorPoint,

    #[error("invalid initialization")]
    InvalidInitialization,

    #[error("uninformative classifier")]
    UninformativeClassifier,

    #[error("unstable quantifier: {failed} of {total} bootstrap iterations failed")]
    UnstableQuantifier { failed: usize, total: usize },

    #[error("insufficient {class} samples: need {needed}, have {available}")]
    PoolExhausted {
        class: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
