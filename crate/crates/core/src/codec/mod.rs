//! Standards-style beamforming feedback: SVD extraction, Givens angles,
//! angle quantization and bit packing.

mod bfm;
mod givens;
mod quant;

pub use bfm::{extract_bfm, svd_full, BfmMatrix, SvdResult};
pub use givens::{
    angle_count, angle_order, givens_decompose, givens_reconstruct, AngleCount, AngleId, AngleKind,
    AngleSet, MAX_TX,
};
pub use quant::{
    dequantize_angles, phi_index, phi_level, psi_index, psi_level, quantize_angles, FeedbackFrame,
    FeedbackKind,
};

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("unsupported geometry: {0}")]
    Geometry(String),
    #[error("channel is rank deficient at subcarrier {subcarrier}")]
    DegenerateChannel { subcarrier: usize },
    #[error("column {column} of subcarrier {subcarrier} is not canonical (last row must be real and non-negative)")]
    NotCanonical { subcarrier: usize, column: usize },
    #[error("{kind:?} angle {value} out of range")]
    AngleOutOfRange { kind: AngleKind, value: f64 },
    #[error("framing error: {0}")]
    Framing(String),
}
