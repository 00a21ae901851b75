use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs whose shapes disagree (vector lengths, matrix dimensions).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Inputs that are the right shape but carry invalid values.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// Malformed row or header in a CSV input, with its 1-based line number.
    #[error("{path}:{line}: {msg}")]
    Csv {
        path: String,
        line: usize,
        msg: String,
    },

    /// An optimization routine failed to produce a certified solution.
    #[error("solver error: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }
}
