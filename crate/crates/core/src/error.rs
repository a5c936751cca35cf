use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("edge ({from}, {to}) references a vertex outside 1..={vertex_count}")]
    UnknownVertex {
        from: usize,
        to: usize,
        vertex_count: usize,
    },

    #[error("expected at most two distinct graph labels, found {0:?}")]
    TooManyGraphLabels(Vec<i64>),

    #[error("vertex label {label} out of range for alphabet of size {alphabet_size}")]
    LabelOutOfRange { label: usize, alphabet_size: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("class {class} has {count} members, fewer than k = {k}")]
    InsufficientClassMembers { class: u8, count: usize, k: usize },

    #[error("training set contains only class {0}")]
    SingleClass(u8),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}
