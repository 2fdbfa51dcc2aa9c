use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input data violates a dataset invariant. Rows and columns are 1-based.
    #[error("invalid data at row {row}, column {col}: {msg}")]
    Data { row: usize, col: usize, msg: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{what} is not symmetric positive definite")]
    NotPositiveDefinite { what: &'static str },

    #[error("empty truncation interval ({lo}, {hi}]")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("malformed draw store: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input rather than runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Data { .. } | Error::Invalid(_) | Error::Csv(_) | Error::Json(_) | Error::Format(_)
        ) || matches!(self, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}
