use thiserror::Error;

/// Errors raised by the uncertainty pipeline.
#[derive(Debug, Error)]
pub enum GpecError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("failed to load {what}: {reason}")]
    Load { what: String, reason: String },

    #[error("pair does not straddle the decision threshold (predict(a) = {pa}, predict(b) = {pb})")]
    RejectedPair { pa: f64, pb: f64 },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("no boundary points survived sampling for model '{0}'")]
    EmptyBoundary(String),

    #[error("need at least 2 boundary points, got {0}")]
    InsufficientPoints(usize),

    #[error(
        "kernel matrix not factorizable even with jitter {jitter:e}; pick a different lambda (see validate-lambda)"
    )]
    NonPsdKernel { jitter: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = GpecError> = std::result::Result<T, E>;
