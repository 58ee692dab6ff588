use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("unknown state {0:?}")]
    UnknownState(String),

    #[error("date {0} is outside the observation window")]
    OutOfWindow(chrono::NaiveDate),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("constant series")]
    ConstantSeries,

    #[error("degenerate covariance")]
    DegenerateCovariance,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{path}: {message}")]
    Resource { path: PathBuf, message: String },

    #[error("geocoder: {0}")]
    Geocoder(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn resource(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Resource {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
