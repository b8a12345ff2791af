//! Joint feedback compression and zone classification: a shared quantized
//! encoder, a residual reconstruction decoder and a linear positioning head.

mod checkpoint;
mod data;
mod model;
mod train;

pub use checkpoint::{decode_model, encode_model, load_model, save_model, Manifest, Stateful};
pub use data::BfmDataset;
pub use model::{bfm_shape, build_model, EncoderConfig, Evaluation, FpnetModel, Inference, EVAL_BATCH, LEAKY_SLOPE, RESBLOCK_WIDTHS};
pub use train::{
    fine_tune, joint_gradients, reconstruct_matrix, train_fpnet, train_sequential_baseline, train_stage1, train_stage2, EpochLog,
    SequentialBaseline, TrainConfig,
};


use crate::channel::ChannelError;
use crate::codec::CodecError;
use crate::metrics::MetricsError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum FpnetError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty or unusable data: {0}")]
    EmptyData(&'static str),
    #[error("requested {requested} samples but only {available} are available")]
    NotEnoughData { requested: usize, available: usize },
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
