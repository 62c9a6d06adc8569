use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {what} (node {node}, round {round})")]
    NonFinite {
        what: &'static str,
        node: usize,
        round: u64,
    },

    #[error("decode error at bit offset {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    #[error("decode failure on edge {sender} -> {receiver} in round {round}: {source}")]
    Exchange {
        sender: usize,
        receiver: usize,
        round: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn decode(offset: usize, reason: impl Into<String>) -> Self {
        Error::Decode {
            offset,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::NonFinite { .. } => "non_finite",
            Error::Decode { .. } => "decode",
            Error::Exchange { .. } => "exchange",
            Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::Topology(_) => "topology",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
