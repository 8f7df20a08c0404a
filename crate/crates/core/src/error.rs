use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} did not converge: {detail}")]
    NonConvergence { what: &'static str, detail: String },

    #[error("moment matrix is singular or ill-conditioned (reciprocal condition {rcond:.3e})")]
    SingularMoments { rcond: f64 },

    #[error("exponential-family fit needs at least {needed} distinct data points, found {found}")]
    TooFewDistinctPoints { needed: usize, found: usize },

    #[error("Hessian is degenerate (reciprocal condition {rcond:.3e})")]
    DegenerateHessian { rcond: f64 },

    #[error("carrier density underflows to zero at x = {x}")]
    EvaluationOutsideSupport { x: f64 },

    #[error("integrated squared bias is zero for method {method}: no finite AMISE minimiser")]
    ZeroBias { method: String },

    #[error("method {method} requires the Gaussian kernel")]
    UnsupportedKernel { method: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in {source_name} at line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("validation failed for density '{density}': {invariant}")]
    Validation { density: String, invariant: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::UnsupportedKernel { .. } => 2,
            Error::Parse { .. } | Error::Validation { .. } => 3,
            Error::NonConvergence { .. }
            | Error::SingularMoments { .. }
            | Error::TooFewDistinctPoints { .. }
            | Error::DegenerateHessian { .. }
            | Error::EvaluationOutsideSupport { .. }
            | Error::ZeroBias { .. } => 4,
            Error::Io { .. } => 5,
        }
    }
}
