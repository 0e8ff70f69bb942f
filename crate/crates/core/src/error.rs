//! Crate-wide error type, categorized to match the CLI's exit-code taxonomy.

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// The four variants map one-to-one onto the CLI exit codes:
/// config → 2, io → 3, data → 4, numeric → 5.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: out-of-range parameter, malformed config file,
    /// unknown enum value.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem or serialization failure.
    #[error("io error: {0}")]
    Io(String),

    /// Structurally valid inputs that the operation cannot accept:
    /// dimension mismatch, empty dataset, single-class training set.
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure: singular system, non-finite intermediate.
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code for the CLI: 2 config, 3 io, 4 data, 5 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) => 3,
            Error::Data(_) => 4,
            Error::Numeric(_) => 5,
        }
    }
}
