use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CoralError> = std::result::Result<T, E>;

/// Broad grouping used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed files, bad shapes, bad arguments.
    Input,
    /// Singular or indefinite matrices.
    Numerical,
    /// Label and sampling problems: degenerate classes, short strata.
    Protocol,
}

#[derive(Debug, Error)]
pub enum CoralError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min}, largest {max})")]
    NotPsd { min: f64, max: f64 },

    #[error("unsupported matrix power {0}; only 0.5 and -0.5 are available")]
    UnsupportedPower(f64),

    #[error("rank {rank} out of range for dimension {dim}")]
    InvalidRank { rank: usize, dim: usize },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error(
        "{which} covariance is rank deficient (rank {rank} of {dim}) and lambda = 0; \
         use the analytical mode or a positive lambda"
    )]
    SingularCovariance { which: &'static str, rank: usize, dim: usize },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("cannot stratify into {folds} folds: class {class} has {count} examples")]
    Stratification { class: usize, count: usize, folds: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}")]
    Context {
        context: String,
        #[source]
        source: Box<CoralError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CoralError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            CoralError::NotPsd { .. } | CoralError::SingularCovariance { .. } => ErrorKind::Numerical,
            CoralError::DegenerateLabels(_) | CoralError::Stratification { .. } | CoralError::Protocol(_) => {
                ErrorKind::Protocol
            }
            CoralError::Context { source, .. } => source.kind(),
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoralError::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl std::fmt::Display, message: impl Into<String>) -> Self {
        CoralError::Parse { path: path.to_string(), message: message.into() }
    }

    /// Wraps the error with a leading description, keeping its kind.
    pub fn context(self, context: impl Into<String>) -> Self {
        CoralError::Context { context: format!("{}: {}", context.into(), self), source: Box::new(self) }
    }
}
