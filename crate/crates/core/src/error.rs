use std::path::Path;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("behind camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("empty foreground")]
    EmptyForeground,
    #[error("zero-norm aggregate")]
    ZeroNormAggregate,
    #[error("empty index")]
    EmptyIndex,
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("degenerate object cloud ({0} valid points)")]
    DegenerateCloud(usize),
    #[error("insufficient visible seeds ({0} survived)")]
    InsufficientSeeds(usize),
    #[error("not enough correspondences: need {need}, got {got}")]
    NotEnoughPoints { need: usize, got: usize },
    #[error("degenerate configuration")]
    DegenerateConfiguration,
    #[error("no solvable frames")]
    NoSolvableFrames,
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(path: &Path, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.display().to_string(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for failures of a numerical routine on otherwise well-formed data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateConfiguration
                | Error::Divergence(_)
                | Error::NoSolvableFrames
                | Error::ZeroNormAggregate
                | Error::DegenerateCloud(_)
        )
    }
}
