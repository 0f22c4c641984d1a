use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("index {index} out of range for {len} sentences")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("degenerate attention: normalization term is {0}")]
    DegenerateAttention(f64),

    #[error("enumeration cap exceeded (l={len}, cap={cap})")]
    CapExceeded { len: usize, cap: usize },

    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("label cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            message: message.into(),
        }
    }

    pub(crate) fn shape(what: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            what,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
