use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),

    /// Input outside the domain where a closed-form result exists.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("simulation fault at t = {t:.6e} s: {detail}")]
    SimulationFault { t: f64, detail: String },

    #[error("estimator fault at sample {sample}: {detail}")]
    EstimatorFault { sample: usize, detail: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Configuration problems. Messages always name the offending key.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("missing required keys: {}", .0.join(", "))]
    Missing(Vec<String>),

    #[error("invalid value for `{key}`: expected {expected}, got {received}")]
    Invalid {
        key: String,
        expected: String,
        received: String,
    },

    #[error("unknown key `{0}`")]
    Unknown(String),

    #[error("syntax error: {0}")]
    Syntax(String),

    #[error("conflicting constraint: {0}")]
    Conflict(String),
}

impl ConfigError {
    pub fn invalid(key: &str, expected: impl Into<String>, received: impl ToString) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            expected: expected.into(),
            received: received.to_string(),
        }
    }
}
