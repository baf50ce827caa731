use alloc::string::String;

use crate::tensor::Shape;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Shape, got: Shape },

    #[error("data length {len} does not match shape {shape:?}")]
    LengthMismatch { shape: Shape, len: usize },

    #[error("empty tensor")]
    Empty,

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("singular matrix: pivot magnitude {pivot:e} in column {column}")]
    Singular { column: usize, pivot: f64 },

    #[error("imaginary residue {0:e} exceeds tolerance after inverse transform")]
    ImaginaryResidue(f64),

    #[error("{features} features are not divisible by group size {group}")]
    GroupSize { features: usize, group: usize },

    #[error("layer {index} ({kind}) declares no Lipschitz bound")]
    NoLipschitzBound { index: usize, kind: &'static str },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gradient tape does not match the network: {0}")]
    Tape(String),

    #[error("training diverged (loss is NaN) at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
