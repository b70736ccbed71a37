use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A JSONL line failed schema validation.
    #[error("line {line}: field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },

    /// A record is structurally valid JSON but violates a domain invariant.
    #[error("record `{record_id}`: {message}")]
    Record { record_id: String, message: String },

    /// A requested attack lacks the inputs it needs on some record.
    #[error("record `{record_id}`: attack `{attack}` requires {missing}")]
    MissingInput {
        record_id: String,
        attack: String,
        missing: String,
    },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParam { name: String, message: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("index file {path}: {message}")]
    IndexFormat { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("compression failed: {0}")]
    Compression(#[source] std::io::Error),

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParam {
            name: name.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data or parameters rather than by
    /// the environment (I/O) or a bug.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::Other(_))
    }
}
