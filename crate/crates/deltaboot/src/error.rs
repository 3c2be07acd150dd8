//! Crate-wide error type.

use crate::delta::EigenPairs;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at {layer}: expected {expected}, got {found}")]
    ShapeMismatch {
        layer: String,
        expected: String,
        found: String,
    },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: u64 },

    #[error("insufficient replicates: need at least 2, got {got}")]
    InsufficientReplicates { got: usize },

    #[error("insufficient data: need at least {need} points, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("degenerate regressor: x-variance is zero over {n} points")]
    DegenerateRegressor { n: usize },

    #[error("eigenpair {index} has non-positive eigenvalue {value}")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error(
        "lanczos converged {converged}/{requested} pairs after {iters} iterations \
         (worst residual {worst_residual:.3e})"
    )]
    LanczosNoConvergence {
        converged: usize,
        requested: usize,
        iters: usize,
        worst_residual: f64,
        /// The pairs that did converge, so callers can salvage partial work.
        partial: Box<EigenPairs>,
    },

    #[error("parameter count {p} exceeds dense-path cap {cap}; use the low-rank path")]
    DenseCapExceeded { p: usize, cap: usize },

    #[error("count mismatch: {0}")]
    CountMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("idx parse error at byte offset {offset}: {message}")]
    Idx { message: String, offset: u64 },

    #[error("checkpoint error in {path}: {message}")]
    Checkpoint { path: String, message: String },

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: impl Into<String>) -> Error {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// True for errors that indicate a bad user-supplied configuration
    /// rather than a runtime failure (drives the CLI exit code).
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidSpec(_) | Error::InvalidTrainConfig(_)
        )
    }
}
