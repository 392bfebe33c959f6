use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("inconsistent offsets: {0}")]
    OffsetMismatch(String),

    #[error("truncated blob: need {needed} bytes, found {found}")]
    Truncated { needed: u64, found: u64 },

    #[error("unknown dtype {0:?}")]
    UnknownDtype(String),

    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),

    #[error("missing parameter {0:?}")]
    MissingParam(String),

    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
