use alloc::string::String;

/// Errors produced by the navigation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("contact lock: tip pushed {depth_mm:.2} mm into the lumen wall")]
    ContactLock { depth_mm: f64 },
    #[error("render error: {0}")]
    Render(String),
    #[error("filter dimension mismatch: filter has {expected} samples, measurement has {got}")]
    FilterDimension { expected: usize, got: usize },
    #[error("adaptation rejected: {0}")]
    Adaptation(String),
    #[error("estimator dimension mismatch: expected {expected}, got {got}")]
    EstimatorDimension { expected: usize, got: usize },
    #[error("follow-the-leader shift of {shift} samples exceeds the {available} active samples")]
    Shift { shift: usize, available: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
