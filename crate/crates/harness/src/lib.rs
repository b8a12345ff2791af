//! Experiment runner for `fpnet-core`: TOML configs with named profiles,
//! cached training runs keyed by settings and data, result tables, and a
//! bit-exact reproduction check.

pub mod commands;
pub mod config;
pub mod data;
pub mod knn;
pub mod report;
pub mod runs;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/harness.md")]
mod guide {}

pub use config::{ExperimentConfig, Profile};
pub use data::{prepare, DatasetKey, Prepared};
pub use knn::{knn_accuracy, knn_baseline, knn_predict};
pub use report::{render, reproduce, Reproduction};
pub use runs::{compute_row, FpnetRun, Row, Source, Workspace};

use fpnet_core::adblock::AdError;
use fpnet_core::channel::ChannelError;
use fpnet_core::codec::CodecError;
use fpnet_core::fpnet::FpnetError;
use fpnet_core::metrics::MetricsError;
use fpnet_core::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing {0}")]
    Missing(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Fpnet(#[from] FpnetError),
    #[error(transparent)]
    Adblock(#[from] AdError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
