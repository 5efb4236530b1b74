use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by model construction, forward passes, losses and metrics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("image {height}x{width} is not divisible by patch size {patch}")]
    DimensionMismatch { height: usize, width: usize, patch: usize },
    #[error("expected {expected} adapters, got {got}")]
    AdapterCount { expected: usize, got: usize },
    #[error("expected {expected} input channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("value out of range in {0}")]
    OutOfRange(&'static str),
    #[error("ground truth must be binary")]
    NonBinary,
    #[error("invalid label {0}")]
    InvalidLabel(String),
    #[error("unknown adapter variant `{0}`")]
    UnknownVariant(String),
    #[error("unknown domain shift `{0}`")]
    UnknownShift(String),
    #[error("noise variance must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("AUC and EER need both classes present")]
    SingleClass,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loss became non-finite at step {0}")]
    Diverged(usize),
}

pub type Result<T> = core::result::Result<T, Error>;
