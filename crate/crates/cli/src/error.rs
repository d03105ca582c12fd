use thiserror::Error;
use uq_core::UqError;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] UqError),

    #[error("config: {0}")]
    Config(String),

    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(UqError::Convergence { .. }) => EXIT_CONVERGENCE,
            Self::Core(UqError::Numeric(_) | UqError::ChainFailure { .. } | UqError::DegenerateSweep(_)) => EXIT_NUMERIC,
            _ => EXIT_INVALID,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
