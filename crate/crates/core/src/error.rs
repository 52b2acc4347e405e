use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the command-line driver to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no events in any stratum")]
    NoEvents,

    #[error("monotone likelihood: coefficient {index} reached {value:.3} at iteration {iteration}")]
    MonotoneLikelihood {
        index: usize,
        value: f64,
        iteration: usize,
    },

    #[error("information matrix is not positive definite")]
    SingularInformation,

    #[error("fit did not converge after {iterations} iterations (max |score| = {max_score:.3e})")]
    NotConverged { iterations: usize, max_score: f64 },

    #[error("robust covariance was requested but not computed for this fit")]
    RobustUnavailable,

    #[error("coefficient index {index} out of range for {len} coefficients")]
    CoefficientIndex { index: usize, len: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-positivity: {0}")]
    NonPositivity(String),

    #[error("treated-cohort selection fraction {fraction:.2e} is below the floor {floor:.0e} after {candidates} candidates")]
    SelectionFloor {
        fraction: f64,
        floor: f64,
        candidates: u64,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("{path}: row {row}, column `{column}`: {message}")]
    Schema {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::NoEvents
            | Error::MonotoneLikelihood { .. }
            | Error::SingularInformation
            | Error::NotConverged { .. }
            | Error::Calibration(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
