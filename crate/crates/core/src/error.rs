use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated a precondition (bad dimensions, non-finite input, ...).
    #[error("usage error: {0}")]
    Usage(String),
    /// Linear algebra failed even after the maximum jitter.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// The plant integrator produced a non-finite state.
    #[error("integration error: {0}")]
    Integration(String),
    /// Every replicate of a black-box evaluation failed.
    #[error("evaluation failed: {0}")]
    Evaluation(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
