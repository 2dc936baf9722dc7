use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum LcbError {
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("arm index {arm} out of range (K = {num_arms})")]
    ArmOutOfRange { arm: usize, num_arms: usize },

    #[error("reward {0} outside [0, 1]")]
    RewardOutOfRange(f64),

    #[error("feature vector norm {0} exceeds 1")]
    FeatureNormTooLarge(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("context must contain at least one arm")]
    EmptyContext,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("rank deficiency: need rank {needed}, data has rank {got}")]
    RankDeficient { needed: usize, got: usize },

    #[error("malformed record at line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("unknown category id {0}")]
    UnknownCategory(usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LcbError>;
