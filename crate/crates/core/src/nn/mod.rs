//! A small deterministic network engine: channels-last tensors, a handful of
//! layers with hand-written backward passes, Adam, and a binary checkpoint
//! format.

mod adam;
mod checkpoint;
mod gemm;
mod layers;
mod loss;
mod tensor;

pub use adam::Adam;
pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use layers::{quantize_value, Layer, Mode, Param, Sequential};
pub use loss::{mse, softmax, softmax_xent};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values {0}")]
    NonFinite(String),
    #[error("quantizer bits must be in 1..=16, got {0}")]
    InvalidBits(u32),
    #[error("label {label} outside [0, {classes})")]
    InvalidLabel { label: usize, classes: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
