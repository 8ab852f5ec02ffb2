use std::path::PathBuf;

use thiserror::Error;

use crate::forward::ForwardReport;
use crate::mesh::FieldVector;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("linear solver failed at time step {step}: {reason}")]
    LinearSolve { step: usize, reason: String },

    /// Newton did not reach tolerance; carries the best iterate and the report so far.
    #[error("Newton failed at time step {step} after {iterations} iterations (residual {residual:.3e})")]
    NewtonFailed {
        step: usize,
        iterations: usize,
        residual: f64,
        best: Box<FieldVector>,
        report: Box<ForwardReport>,
    },

    #[error("{path}:{line}: {reason}")]
    ConfigParse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("missing required configuration key `{0}`")]
    MissingKey(String),

    #[error("configuration too large for verification: {0}")]
    SizeLimit(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
