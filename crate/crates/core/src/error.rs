use std::io;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix is singular to working precision at pivot {pivot}")]
    Singular { pivot: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("non-finite value at index {index} ({context})")]
    NonFinite { context: &'static str, index: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape { op, left, right }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Invalid(_) => 1,
            Error::NonFinite { .. } | Error::Singular { .. } | Error::Shape { .. } => 2,
            Error::Io(_) | Error::Format(_) => 3,
        }
    }
}
