use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CrossNetError {
    /// A precondition on shapes, values, or configuration was violated.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("missing view file for scene `{scene}` at angular position ({row}, {col}): {path}")]
    MissingView {
        scene: String,
        row: usize,
        col: usize,
        path: PathBuf,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at iteration {iteration}; last good checkpoint: {last_checkpoint:?}")]
    NonFiniteLoss {
        iteration: u64,
        last_checkpoint: Option<PathBuf>,
    },

    #[error("report error: {0}")]
    Report(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CrossNetError>;

/// Shorthand for returning a [`CrossNetError::Domain`].
macro_rules! domain_err {
    ($($arg:tt)*) => {
        Err($crate::error::CrossNetError::Domain(format!($($arg)*)))
    };
}
pub(crate) use domain_err;
