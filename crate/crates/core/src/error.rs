use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("propagation failed on [{t0}, {t1}]: {status:?}")]
    Propagation {
        t0: f64,
        t1: f64,
        status: crate::integrators::Status,
    },

    #[error("coarse propagation failed on interval {interval}: {source}")]
    CoarseFailure { interval: usize, source: Box<Error> },

    #[error("fine propagation failed on interval {interval} at iteration {iteration}: {source}")]
    FineFailure {
        interval: usize,
        iteration: usize,
        source: Box<Error>,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("chart mismatch: {0}")]
    ChartMismatch(String),

    #[error("malformed chart file at line {line}: {reason}")]
    ChartFormat { line: usize, reason: String },

    #[error("run is incomplete: {0}")]
    IncompleteRun(String),

    #[error("runs disagree on target accuracy ({0} vs {1})")]
    TargetMismatch(f64, f64),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
