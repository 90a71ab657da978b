use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("model `{0}` requires a dataset")]
    MissingData(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("reference standard deviation is zero in dimension {0}")]
    ZeroReferenceSd(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("covariance factorization failed")]
    Factorization,

    #[error("long-run reference did not converge: max R-hat {max_rhat:.4} in dimension {dim}")]
    NotConverged { max_rhat: f64, dim: usize, rhat: Vec<f64> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
