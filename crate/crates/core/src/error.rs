use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("dictionary {source_name} has no pair present in both vocabularies ({skipped} skipped)")]
    EmptyDictionary { source_name: String, skipped: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty filter: no inner products agree within epsilon = {epsilon}; raise epsilon")]
    EmptyFilter { epsilon: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (max residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular value decomposition did not converge")]
    Svd,

    #[error("gradient descent diverged at epoch {epoch} (loss {loss}); use a smaller learning rate")]
    Diverged { epoch: usize, loss: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical routines themselves, as opposed to
    /// bad input files or arguments.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EmptyFilter { .. }
                | Error::NoConvergence { .. }
                | Error::Svd
                | Error::Diverged { .. }
        )
    }
}
