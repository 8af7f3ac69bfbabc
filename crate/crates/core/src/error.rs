use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("cannot parse quantity `{input}`: {reason}")]
    Quantity { input: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("corrupt q-table file: {0}")]
    CorruptTable(String),

    #[error(
        "q-table fingerprint {found:016x} does not match scenario fingerprint {expected:016x}"
    )]
    FingerprintMismatch { expected: u64, found: u64 },

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
