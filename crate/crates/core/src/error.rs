use thiserror::Error;

/// Errors raised by data loading, dataset construction, model fitting and
/// evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A row of an input file could not be parsed. Carries the 1-based
    /// line number of the offending record.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An input violated a documented precondition or invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A requested year, country or product is not present.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Score-matrix assembly left a cell uncovered or covered twice.
    #[error("assembly error: {0}")]
    Assembly(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn lookup(msg: impl Into<String>) -> Self {
        Error::Lookup(msg.into())
    }
}
