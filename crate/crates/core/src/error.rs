use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("task {task} out of range for {num_tasks} tasks")]
    TaskOutOfRange { task: usize, num_tasks: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("degenerate task {0}: zero task variance")]
    DegenerateTask(usize),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("point outside the design domain: {0}")]
    OutOfDomain(String),

    #[error("matrix is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("fit failed: all {restarts} restarts were rejected")]
    FitFailed { restarts: usize },

    #[error("acquisition optimization failed: {0}")]
    AcquisitionFailed(String),

    #[error("insufficient curve support: n = {n} outside [{min}, {max}]")]
    InsufficientCurveSupport { n: f64, min: f64, max: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{failed} of {total} replicates failed")]
    ReplicatesFailed { failed: usize, total: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
