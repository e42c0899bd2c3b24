use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the sig2d library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image field: {0}")]
    InvalidField(String),

    #[error(
        "window ({row0},{row1};{col0},{col1}) out of range for {rows}x{cols} image \
         (need 0 <= row0 < row1 <= rows-1 and 0 <= col0 < col1 <= cols-1)"
    )]
    InvalidWindow {
        row0: usize,
        row1: usize,
        col0: usize,
        col1: usize,
        rows: usize,
        cols: usize,
    },

    #[error(
        "window ({row0},{row1};{col0},{col1}) violates the 1-pixel margin required \
         by the central difference scheme on a {rows}x{cols} image"
    )]
    MarginViolation {
        row0: usize,
        row1: usize,
        col0: usize,
        col1: usize,
        rows: usize,
        cols: usize,
    },

    #[error("channel {channel} out of range for {channels}-channel image")]
    InvalidChannel { channel: usize, channels: usize },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training labels are degenerate: {0}")]
    DegenerateLabels(String),

    #[error("feature names in the table do not match the model: {0}")]
    FeatureMismatch(String),

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("{path}: unsupported image format: {message}")]
    UnsupportedFormat { path: PathBuf, message: String },

    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
