use thiserror::Error;

pub type Result<T, E = SaddleError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SaddleError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("saddle unknown: problem has no known saddle point or objective")]
    SaddleUnknown,

    #[error("{0} is not available for this problem")]
    Unsupported(&'static str),

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("non-finite iterate at iteration {iteration}")]
    NonFiniteIterate { iteration: usize },

    #[error("truncation overflow at iteration {iteration}: counter exceeded cap {cap}")]
    TruncationOverflow { iteration: usize, cap: usize },

    #[error("boundary equilibrium: |theta*| = {theta_norm:.6}, |mu*| = {mu_norm:.6}")]
    BoundaryEquilibrium { theta_norm: f64, mu_norm: f64 },

    #[error("singular system")]
    SingularSystem,

    #[error("matrix is not positive semidefinite")]
    NotPositiveSemidefinite,

    #[error("matrix is not Hurwitz: an eigenvalue has real part {0}")]
    NotHurwitz(f64),

    #[error("insufficient batch length: lag-1 autocorrelation of batch means is {0:.4}")]
    InsufficientBatchLength(f64),

    #[error("empty sample set")]
    EmptySamples,

    #[error("degenerate sample range: all samples equal {0}")]
    DegenerateRange(f64),

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("experiment aborted: {failures} of {total} replications failed")]
    ExperimentAborted { failures: usize, total: usize },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SaddleError {
    fn from(e: std::io::Error) -> Self {
        SaddleError::Io(e.to_string())
    }
}

impl From<csv::Error> for SaddleError {
    fn from(e: csv::Error) -> Self {
        SaddleError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for SaddleError {
    fn from(e: serde_json::Error) -> Self {
        SaddleError::Io(e.to_string())
    }
}
