use std::path::PathBuf;

/// Errors raised by the estimators and the experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A matrix that must be invertible (or positive semi-definite) is not.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A configured size limit would be exceeded.
    #[error("resource limit exceeded: {what} needs {requested}, limit is {limit}")]
    Resource {
        what: &'static str,
        requested: u128,
        limit: u128,
    },

    /// The input samples make the estimator undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that mark an experiment cell as skipped rather than invalid.
    pub fn is_resource(&self) -> bool {
        matches!(self, Error::Resource { .. })
    }
}
