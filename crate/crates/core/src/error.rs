use std::path::PathBuf;

/// Errors returned by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A CSV row had a different number of fields than the header.
    #[error("line {line}: expected {expected} fields, found {found}")]
    Arity { line: usize, expected: usize, found: usize },
    /// A token in a continuous column could not be parsed as a number.
    #[error("line {line}, column '{column}': '{token}' is not a number")]
    NotNumeric { line: usize, column: String, token: String },
    /// An ordinal token was outside the declared level set.
    #[error("line {line}, column '{column}': '{token}' is not a declared ordinal level")]
    UnknownLevel { line: usize, column: String, token: String },
    /// A timestamp could not be parsed or the index is not strictly increasing.
    #[error("line {line}: {reason}")]
    Timestamp { line: usize, reason: String },
    /// The input contained no data rows.
    #[error("empty input: {0}")]
    Empty(String),
    /// The header did not match the declared schema.
    #[error("schema mismatch: {0}")]
    Schema(String),
    /// An argument was outside its admissible domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A precondition of an operation did not hold for the supplied data.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// A matrix that must be positive definite was not.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    /// A linear system was singular or too badly conditioned to solve.
    #[error("singular system: {0}")]
    Singular(String),
    /// Training diverged or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Two inputs that must be aligned were not.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
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
    /// Short machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Arity { .. }
            | Error::NotNumeric { .. }
            | Error::UnknownLevel { .. }
            | Error::Timestamp { .. }
            | Error::Csv(_)
            | Error::Json(_) => "parse",
            Error::Empty(_) | Error::Schema(_) => "input",
            Error::InvalidArgument(_) => "argument",
            Error::Precondition(_) => "precondition",
            Error::NotPositiveDefinite(_) | Error::Singular(_) | Error::Numerical(_) => "numerical",
            Error::LengthMismatch(_) => "alignment",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
