use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid split fractions ({hold}, {test}): both must be positive and sum to 1")]
    InvalidSplit { hold: f64, test: f64 },

    #[error("invalid grid shape: {0}")]
    InvalidShape(String),

    #[error("grid is not equi-weight (bin sizes range {min}..={max}); use vw-dpmt instead")]
    NotEquiWeight { min: u64, max: u64 },

    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),

    #[error("state space of {states} boundaries exceeds the enumeration limit of {limit}")]
    StateSpaceTooLarge { states: f64, limit: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("score {score} lies outside the valid range [{lo}, {hi}]")]
    OutsideValidRange { score: f64, lo: f64, hi: f64 },

    #[error("quadrature did not converge (estimated error {error_estimate:e})")]
    Quadrature { error_estimate: f64 },

    #[error("all bins at score index {0} are empty")]
    EmptyScoreBin(usize),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
