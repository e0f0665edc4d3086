use thiserror::Error;

/// Errors produced by the estimators, generators and predictors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty site set")]
    EmptySiteSet,

    #[error("metric mismatch: {0} vs {1}")]
    MetricMismatch(String, String),

    #[error("invalid coordinates at point {index}: {reason}")]
    InvalidCoordinate { index: usize, reason: String },

    #[error("k = {k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("loss {value} at index {index} outside [0, {bound}]")]
    LossOutOfRange { index: usize, value: f64, bound: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Cholesky factorisation failed for {size}x{size} matrix (jitter reached {jitter:e}, min diagonal {min_diag:e})")]
    Cholesky {
        size: usize,
        jitter: f64,
        min_diag: f64,
    },

    #[error("singular or rank-deficient system: {0}")]
    Singular(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical linear algebra rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Cholesky { .. } | Error::Singular(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
