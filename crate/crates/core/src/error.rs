use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("schedule violation at node {node}: {reason}")]
    Schedule { node: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("subproblem at node {node} is not positive definite")]
    NotPositiveDefinite { node: usize },

    #[error("problem does not provide a majorizing surrogate")]
    NoSurrogate,

    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),

    #[error("ground truth has zero norm")]
    ZeroTruth,

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            expected,
            got,
            context,
        })
    }
}
