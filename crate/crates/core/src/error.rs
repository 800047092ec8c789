use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("output position {n} out of range for a target of length {len}")]
    PositionOutOfRange { n: usize, len: usize },

    #[error("operation not supported by this model: {0}")]
    Unsupported(&'static str),

    #[error("non-finite loss {loss} at training step {step}")]
    NonFiniteLoss { step: usize, loss: f64 },

    #[error("non-finite gradient at path step k={k}, output position n={n}")]
    NonFiniteGradient { k: usize, n: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("sentence {id}: {source}")]
    Sentence {
        id: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    pub fn in_sentence(self, id: usize) -> Self {
        Error::Sentence {
            id,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
