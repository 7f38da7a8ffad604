use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("capacity exceeded: {what} ({got} > {max})")]
    Capacity {
        what: &'static str,
        got: usize,
        max: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("trajectory id mismatch: {}", .0.join("; "))]
    IdMismatch(Vec<String>),

    #[error("no feasible assignment: {0}")]
    Infeasible(String),

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
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error comes from malformed or inconsistent input data
    /// rather than from the environment.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Parse { .. }
                | Error::LengthMismatch(_)
                | Error::IdMismatch(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
