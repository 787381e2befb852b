use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("mask touches the image border at ({row}, {col})")]
    MaskOnBorder { row: usize, col: usize },

    #[error("unknown class {class} (class count {count})")]
    UnknownClass { class: usize, count: usize },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },

    #[error("weights error: {0}")]
    Weights(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Validation(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the command-line front end: 2 for I/O failures,
    /// 1 for everything else (validation).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Codec { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
