use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient samples: need at least {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("insufficient classes: need at least {need}, got {got}")]
    InsufficientClasses { need: usize, got: usize },

    #[error("no class survives the min-samples filter (min_samples = {min_samples})")]
    NoUsableClasses { min_samples: usize },

    #[error("matrix is not positive definite (after maximal jitter {max_jitter:e})")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("probability {value} outside the open interval (0, 1)")]
    InvalidProbability { value: f64 },

    #[error("zero-norm vector has no direction")]
    DegenerateVector,

    #[error("degenerate hull: {0}")]
    DegenerateHull(String),

    #[error("target dimension {target} must be smaller than input dimension {input}")]
    InvalidTargetDim { target: usize, input: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
