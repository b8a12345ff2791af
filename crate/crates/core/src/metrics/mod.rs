//! Evaluation quantities: beamforming similarity, simulated link quality,
//! throughput, classification and detection scores, and a PCA projection.

mod classify;
mod link;
mod pca;
mod similarity;
mod throughput;

pub use classify::{accuracy, ad_metrics, classification_metrics, AdMetrics, MetricsReport};
pub use link::simulate_link_evm;
pub use pca::{pca_project, Projection};
pub use similarity::{sgcs, sgcs_per_subcarrier};
pub use throughput::{gamma_from_evm, gross_throughput, net_throughput, McsTable, TimingModel};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("column {column} of subcarrier {subcarrier} has zero norm")]
    ZeroColumn { subcarrier: usize, column: usize },
    #[error("effective channel is singular at subcarrier {0}")]
    SingularChannel(usize),
    #[error("invalid table or model: {0}")]
    Invalid(String),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}
