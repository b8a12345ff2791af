//! Synthetic indoor MIMO-OFDM channel fingerprints.
//!
//! A rectangular office is tiled into labeled zones. Each packet is the
//! channel between a 3-antenna station somewhere in a zone and a 2-antenna
//! access point, built from a direct path plus single-bounce point
//! scatterers. A corridor behind a lossy wall supplies out-of-distribution
//! packets.

mod config;
mod dataset;
mod environment;
mod sample;
mod split;

pub use config::{SystemConfig, DEFAULT_CAPTURE_SNR_DB};
pub use dataset::{decode_dataset, encode_dataset, read_dataset, write_dataset, DATASET_MAGIC, DATASET_SCHEMA_VERSION};
pub use environment::{
    generate_environment, generate_environment_with, perturb_environment, zone_grid, zone_merge_map, EnvParams,
    EnvironmentModel, EnvironmentTag, Scatterer, Zone,
};
pub use sample::{
    channel_at, sample_all_zones, sample_csi, BatchManifest, CsiBatch, CsiSample, Label, Region,
};
pub use split::split_dataset;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{n_zones} zones cannot tile the room into equal rectangles with aspect ratio <= {max_aspect}")]
    UntileableZones { n_zones: usize, max_aspect: f64 },
    #[error("zone {0} does not exist")]
    UnknownZone(usize),
    #[error("snr must be finite or +inf, got {0}")]
    InvalidSnr(f64),
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    InvalidSplit((f64, f64, f64)),
    #[error("{label:?} has {available} samples, fewer than the {parts} split parts")]
    ZoneTooSmall { label: Label, available: usize, parts: usize },
    #[error("dataset schema version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated {section}: expected {expected} bytes, found {found}")]
    Truncated { section: &'static str, expected: usize, found: usize },
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
