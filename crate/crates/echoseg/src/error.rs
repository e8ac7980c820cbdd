//! Unified error type for the crate.
//!
//! The CLI maps variants onto its exit-code contract: validation/config
//! problems exit 2, I/O problems exit 3, a non-finite training loss exits 4.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("non-finite loss at {0}; last good checkpoint retained")]
    NonFiniteLoss(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Exit code used by the command-line frontend.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Config(_) => 2,
            Error::Io { .. } | Error::Image { .. } => 3,
            Error::Numeric(_) => 2,
            Error::NonFiniteLoss(_) => 4,
        }
    }
}
