use thiserror::Error;

/// Errors produced by the core library.
#[derive(Error, Debug)]
pub enum CoreError {
    /// Malformed or out-of-contract input (shape mismatch, bad parameter, non-finite data).
    #[error("validation: {0}")]
    Validation(String),

    /// A statistic or batch is degenerate (zero variance, identical points, empty cluster).
    #[error("degenerate: {0}")]
    Degenerate(String),

    /// Iterative solver failed to reach its residual tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    /// Training aborted (non-finite loss); carries the step and the per-term diagnostic.
    #[error("training failed at step {step}: {detail}")]
    Training { step: usize, detail: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CoreError::Validation(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        CoreError::Degenerate(msg.into())
    }
}
