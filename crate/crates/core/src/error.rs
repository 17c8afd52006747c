use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {lhs:?} vs {rhs:?} ({context})")]
    Dimension {
        lhs: Vec<usize>,
        rhs: Vec<usize>,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("divergence undefined: {0}")]
    Divergence(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A record that parsed but violates the corpus schema.
    #[error("schema: {0}")]
    Schema(String),

    #[error("bad checkpoint format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(lhs: &[usize], rhs: &[usize], context: &'static str) -> Self {
        Error::Dimension {
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
            context,
        }
    }
}
