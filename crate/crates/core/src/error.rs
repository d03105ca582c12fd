use thiserror::Error;

/// Errors raised by the library.
///
/// Iterates carried by convergence failures are widened to `f64` so the error
/// type does not depend on the scalar parameter.
#[derive(Debug, Error)]
pub enum UqError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        /// Last iterate, row-major.
        last_iterate: Vec<f64>,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("chain failure at iteration {iteration}: {message}")]
    ChainFailure { iteration: usize, message: String },

    #[error("degenerate sweep: {0}")]
    DegenerateSweep(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed data: {0}")]
    Format(String),
}

pub type Result<T, E = UqError> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(UqError::InvalidInput(msg.into()))
}
