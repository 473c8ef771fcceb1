use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid study arm: {0}")]
    InvalidArm(String),
    #[error("dataset must contain at least 1 study")]
    EmptyDataset,
    #[error("duplicate study label `{0}`: labels must be unique")]
    DuplicateLabel(String),
    #[error("dimension mismatch: expected {expected} studies, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("study index {index} out of range for {len} studies")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid odds-ratio bound {0}: delta must be > 1")]
    InvalidBound(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sampler failure in chain {chain}: {reason}")]
    SamplerFailure { chain: usize, reason: String },
}
