use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{axis} extent {extent} is not divisible by patch size {patch}; pad by {pad} pixels")]
    Indivisible {
        axis: &'static str,
        extent: usize,
        patch: usize,
        pad: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("model has no radius head; use fixed-step rollout")]
    NotAdaptive,
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
