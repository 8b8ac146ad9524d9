use thiserror::Error;

use crate::world::Rejection;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed integer encoding; `offset` indexes the flat code sequence.
    #[error("decode error at offset {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    #[error("action rejected: {0}")]
    Rejected(#[from] Rejection),

    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed episode or prediction files.
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn decode(offset: usize, reason: impl Into<String>) -> Self {
        Error::Decode { offset, reason: reason.into() }
    }

    /// Re-raises as a data error whose message starts with `prefix`.
    pub(crate) fn in_data(self, prefix: impl std::fmt::Display) -> Self {
        match self {
            Error::Data(m) => Error::Data(format!("{prefix}: {m}")),
            Error::Io(e) => Error::Io(e),
            other => Error::Data(format!("{prefix}: {other}")),
        }
    }
}
