use std::fmt;

use thiserror::Error;

/// Errors produced by the egoflow library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A file or byte buffer did not conform to its container format.
    #[error("format error: {0}")]
    Format(String),

    /// A text record could not be parsed.
    #[error("parse error at {location}: {message}")]
    Parse {
        location: Location,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where in a text input a parse error occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// Zero-based whitespace-separated field index.
    Field(usize),
    /// One-based line number.
    Line(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Field(i) => write!(f, "field {i}"),
            Location::Line(n) => write!(f, "line {n}"),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn format(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}
