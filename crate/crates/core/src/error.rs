use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient observation: got {got} samples, need at least {need}")]
    InsufficientObservation { got: usize, need: usize },

    #[error("encoding error: expected {expected} components, got {got}")]
    Encoding { expected: usize, got: usize },

    #[error("configuration error at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("layout mismatch: {0}")]
    Layout(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("log error: {0}")]
    Log(String),

    #[error("empty window")]
    EmptyWindow,

    #[error("stage out of range: {0}")]
    StageOutOfRange(String),

    #[error("http error: {0}")]
    Http(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
