use std::fmt;

use gpec::GpecError;
use thiserror::Error;

/// Pipeline stage an error came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Model,
    Boundary,
    Geodesic,
    Kernel,
    Explain,
    Fit,
    Predict,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Model => "model",
            Stage::Boundary => "boundary",
            Stage::Geodesic => "geodesic",
            Stage::Kernel => "kernel",
            Stage::Explain => "explain",
            Stage::Fit => "fit",
            Stage::Predict => "predict",
            Stage::Output => "output",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("[config] {0}")]
    Config(String),

    #[error("[{stage}] {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: GpecError,
    },

    #[error("[output] {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn at(stage: Stage, source: GpecError) -> Self {
        CliError::Stage { stage, source }
    }

    /// 0 success, 1 I/O, 2 configuration, 3 numerical failure, 4 empty boundary.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Stage { source, .. } => match source {
                GpecError::Config(_)
                | GpecError::Parameter(_)
                | GpecError::Load { .. }
                | GpecError::RejectedPair { .. }
                | GpecError::UnsupportedModel(_) => 2,
                GpecError::NonPsdKernel { .. } | GpecError::Numerical(_) => 3,
                GpecError::EmptyBoundary(_) | GpecError::InsufficientPoints(_) => 4,
                GpecError::Io(_) | GpecError::Csv(_) | GpecError::Json(_) => 1,
            },
        }
    }
}

/// Attaches a stage tag to core errors.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, CliError>;
}

impl<T> StageExt<T> for gpec::Result<T> {
    fn stage(self, stage: Stage) -> Result<T, CliError> {
        self.map_err(|e| CliError::at(stage, e))
    }
}
