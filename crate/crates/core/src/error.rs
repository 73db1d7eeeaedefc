use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain where the model is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty candidate set")]
    EmptyCandidates,

    /// AP selection filters left nothing to choose from.
    #[error("no AP subset passes the selection filters: {0}")]
    NoValidSubset(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("image encoding failed: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
