use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed header at byte {offset}: {reason}")]
    MalformedHeader { offset: u64, reason: String },

    #[error("size mismatch at byte {offset}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        offset: u64,
        expected: u64,
        found: u64,
    },

    #[error("non-finite value at byte {offset}")]
    NonFinite { offset: u64 },

    #[error("unsupported format version {found} (this reader understands version {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("corrupt data at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },

    #[error("malformed json in {path}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("no sequence available for candidate {0:?}")]
    MissingSequence(String),

    #[error("sequence {0:?} has no phase labels")]
    MissingPhases(String),

    #[error("sequence {0:?} has no action label")]
    MissingAction(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
