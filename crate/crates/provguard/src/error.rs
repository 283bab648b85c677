//! Crate-wide error type with the exit-code taxonomy used by the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad command-line arguments, descriptors, or config values.
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// An entity id was observed with two different kinds.
    #[error("conflicting kind for {id}: seen as {existing} and {new}")]
    KindConflict {
        id: String,
        existing: String,
        new: String,
    },

    /// Numerics went off the rails (non-finite loss, degenerate distances).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code for the CLI: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Data(_) | Error::KindConflict { .. } | Error::Io(_) | Error::Json(_) => 2,
            Error::Numeric(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
