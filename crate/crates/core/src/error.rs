use std::path::PathBuf;

use thiserror::Error;

use crate::trainer::TrainTrace;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix has no singular value above the rank tolerance {tolerance:e}")]
    RankZero { tolerance: f64 },

    #[error("outside the domain of {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("restricted injectivity constant unavailable: {0}")]
    InjectivityUnavailable(String),

    #[error("guarantee unavailable: {0}")]
    GuaranteeUnavailable(String),

    #[error("bound is outside its regime of validity: {0}")]
    Regime(String),

    #[error("training diverged at iteration {iteration}")]
    Divergence {
        iteration: usize,
        trace: Box<TrainTrace>,
    },

    #[error("phase boundary undefined: {0}")]
    BoundaryUndefined(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
