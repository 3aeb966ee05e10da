//! Error type shared by all pipeline modules.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dataset pairing: {0}")]
    Pairing(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("patch assembly: {0}")]
    Assembly(String),

    #[error("tile alignment: {0}")]
    Alignment(String),

    #[error("CRS mismatch: {0}")]
    Crs(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("cache contract violated: {0}")]
    Contract(String),

    #[error("element placement failed: {0}")]
    Placement(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }
}
