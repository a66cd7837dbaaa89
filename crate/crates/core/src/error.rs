use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside the domain the operation accepts.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input data (observations, tables, curves) violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A numerical computation produced a non-finite or out-of-range value.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Malformed configuration or kernel specification.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
