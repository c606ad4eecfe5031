use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the retrieval and pose pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A requested class, object, sample or bin does not exist.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// A record in a text or JSON-lines file failed validation.
    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    /// Invalid configuration (flags, config file keys, dataset spec).
    #[error("configuration error: {0}")]
    Config(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A binary artifact (checkpoint, embedding dump, PGM) is malformed.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn lookup(msg: impl Into<String>) -> Self {
        Error::Lookup(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
