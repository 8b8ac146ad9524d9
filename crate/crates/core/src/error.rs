use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible shapes. `detail` names the offending shapes.
    #[error("dimension error in {op}: {detail}")]
    Dim { op: &'static str, detail: String },

    #[error("usage error: {0}")]
    Usage(String),

    /// Non-finite values or training divergence.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Malformed input data (schema, spans, vocabulary).
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dim { op, detail: detail.into() }
    }
}
