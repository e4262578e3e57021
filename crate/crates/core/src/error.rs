use thiserror::Error;

/// Errors reported by the analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("densities live on different grids")]
    GridMismatch,
    #[error("numerical procedure did not converge: {0}")]
    NonConvergence(String),
    #[error("too few Monte-Carlo samples: {got} (need at least {min})")]
    InsufficientSamples { got: usize, min: usize },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
