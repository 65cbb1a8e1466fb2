use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("model family `{0}` does not support this operation")]
    WrongFamily(String),
    #[error("no scalar potential registered for this model")]
    MissingPotential,
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("non-finite value in component {component} at cell {cell}")]
    NonFinite { component: usize, cell: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
