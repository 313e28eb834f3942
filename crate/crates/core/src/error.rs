use thiserror::Error;

/// Errors raised by the engine and its codecs.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("symbol {value} out of range for k={k}")]
    SymbolRange { value: u32, k: u8 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("enumeration needs {required} candidates, limit is {limit}")]
    Capacity { required: String, limit: u64 },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn decode(msg: impl Into<String>) -> Error {
    Error::Decode(msg.into())
}
