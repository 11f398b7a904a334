use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the training and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("backward called on a non-scalar node with shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("node {0} was not recorded on this tape")]
    UnrecordedNode(usize),

    #[error("degenerate embedding: norm {0:e} is below the cosine threshold")]
    DegenerateEmbedding(f64),

    #[error("rank correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Process exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

impl Error {
    /// Exit status for a command that failed with this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => EXIT_USAGE,
            Error::Input(_)
            | Error::Parse { .. }
            | Error::Io { .. }
            | Error::Checkpoint(_)
            | Error::Shape(_)
            | Error::UndefinedCorrelation(_) => EXIT_DATA,
            Error::NonFinite(_)
            | Error::DegenerateEmbedding(_)
            | Error::NonScalarLoss(_)
            | Error::UnrecordedNode(_) => EXIT_NUMERIC,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
