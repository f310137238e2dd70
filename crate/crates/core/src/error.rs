use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e}); raise the jitter")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("mutual redundancy among removed units (condition number {condition:e}); shrink the removal set")]
    MutualRedundancy { condition: f64 },

    #[error("need at least {needed} activation samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("gradient descent diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Training { epoch: usize },

    #[error("reference pre-activation has zero norm; relative perturbation undefined")]
    UndefinedMetric,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported model file version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
