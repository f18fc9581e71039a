use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical routine failed (bracketing, overflow, singular system).
    #[error("numerical failure: {0}")]
    Numeric(String),
    /// A caller-side contract was violated (mismatched inputs, wrong orientation).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Input data is malformed or insufficient.
    #[error("data error: {0}")]
    Data(String),
    /// The optimizer hit its iteration cap; the best point found is attached.
    #[error("optimizer did not converge after {iterations} iterations (best log-likelihood {best_loglik:.6})")]
    NotConverged {
        iterations: usize,
        best_loglik: f64,
        best: Box<crate::dcs::ModelFit>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn ensure_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        domain(format!("{what} must be finite, got {x}"))
    }
}
