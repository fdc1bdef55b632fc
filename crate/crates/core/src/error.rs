//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or unknown configuration entry. `key` is the offending key path.
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// A physical or mathematical precondition does not hold (negative radicand,
    /// non-fluvial regime, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear solve or iterative method failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// One or more invariant checks failed.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed persisted basis file.
    #[error("invalid basis file: {0}")]
    Format(String),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Io { .. } | Error::Format(_) => 1,
            Error::Domain(_) => 2,
            Error::Numerical(_) => 3,
            Error::Validation(_) => 4,
        }
    }

    /// Prefixes the message with extra context, keeping the variant.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            Error::Domain(m) => Error::Domain(format!("{what}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{what}: {m}")),
            Error::Validation(m) => Error::Validation(format!("{what}: {m}")),
            Error::Format(m) => Error::Format(format!("{what}: {m}")),
            other => other,
        }
    }
}
