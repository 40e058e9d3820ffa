use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// Array or vector shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A NaN or infinity showed up where finite values are required.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A cache, model or artifact is not in the state the operation expects.
    #[error("state error: {0}")]
    State(String),
    /// Training diverged; the per-epoch loss trace up to the failure is attached.
    #[error("training diverged at epoch {epoch}: {reason}")]
    Training {
        epoch: usize,
        reason: String,
        trace: Vec<f64>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}

pub(crate) fn domain_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
