use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("all strata are empty")]
    EmptyStore,

    #[error("insufficient data: need {needed} examples, store holds {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("storage error in stratum {stratum}: {source}")]
    Storage {
        stratum: i32,
        #[source]
        source: io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid<T>(msg: impl Into<String>) -> Result<T> {
        Err(Error::InvalidInput(msg.into()))
    }
}
