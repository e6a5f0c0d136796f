use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Coarse classification of failures, used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Malformed or inconsistent input data, invalid arguments.
    Input,
    /// Numerical failure or degenerate model.
    Numerical,
    /// Filesystem errors.
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Input => 2,
            ErrorCategory::Numerical => 3,
            ErrorCategory::Io => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum SposeError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("concept index {index} out of range for vocabulary of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("triplet contains duplicate index {0}")]
    DuplicateIndex(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("degenerate model: {0}")]
    Degenerate(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl SposeError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            SposeError::Parse { .. }
            | SposeError::IndexOutOfRange { .. }
            | SposeError::DuplicateIndex(_)
            | SposeError::Shape(_)
            | SposeError::InvalidArgument(_) => ErrorCategory::Input,
            SposeError::Numerical(_) | SposeError::Degenerate(_) => ErrorCategory::Numerical,
            SposeError::Io { .. } => ErrorCategory::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        SposeError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SposeError::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = SposeError> = std::result::Result<T, E>;
