use thiserror::Error;

/// Errors raised by the library. Each variant maps onto a CLI exit class via
/// [`Error::is_precondition`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point outside the domain: {0}")]
    Domain(String),

    #[error("singular equilibrium matrix (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("non-finite evaluation: {0}")]
    NonFinite(String),

    #[error("integration failed: {0}")]
    Integration(#[from] crate::integrate::IntegrationError),

    #[error("training diverged at epoch {epoch}: loss {loss:.3e} exceeds {limit:.3e}")]
    Diverged { epoch: usize, loss: f64, limit: f64, trace: Vec<f64> },

    #[error("no section return: {0}")]
    NoReturn(String),

    #[error("eigensolver did not converge: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the error is a violated input precondition rather than a
    /// numerical failure.
    pub fn is_precondition(&self) -> bool {
        matches!(self, Error::InvalidParameter(_) | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
