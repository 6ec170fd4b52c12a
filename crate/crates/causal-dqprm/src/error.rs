//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A text input (RM, DFA, TL-CD, layout, task file) failed to parse.
    /// `line` is 1-based; 0 means the error is not tied to a single line.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Caller handed an operation something outside its contract
    /// (mismatched alphabets, unknown event, missing file, bad flag value).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A consistency rule of the domain was violated at runtime, e.g. a label
    /// set whose reading order changes the resulting RM state.
    #[error("consistency violation: {0}")]
    Consistency(String),

    /// An internal invariant failed. Always a bug.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
