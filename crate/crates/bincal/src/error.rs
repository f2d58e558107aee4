use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value {0} outside [0, 1]")]
    OutOfDomain(f64),

    #[error("degenerate partition: {0}")]
    DegeneratePartition(String),

    /// A bin received no calibration data; prediction into it is undefined.
    #[error("bin {0} is empty")]
    EmptyBin(usize),

    /// A per-bin statistic was requested with zero observations.
    #[error("statistic undefined for an empty bin")]
    UndefinedBin,

    #[error("bin {bin} is degenerate: {reason}")]
    DegenerateBin { bin: usize, reason: String },

    #[error("weight {weight} at index {index} outside [{lower}, {upper}]")]
    BoundsViolation {
        index: usize,
        weight: f64,
        lower: f64,
        upper: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// True for failures of the numerics themselves, as opposed to bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::NonConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
