//! Synthetic indoor Wi-Fi channels, standard beamforming feedback, and
//! learned feedback that doubles as a location fingerprint.
//!
//! - [`channel`]: geometric multipath CSI for a zoned floor plan.
//! - [`codec`]: SVD feedback matrices, Givens angles, quantized frames.
//! - [`metrics`]: similarity, link EVM, MCS and throughput.
//! - [`nn`]: a small CPU neural network engine.
//! - [`fpnet`]: the joint feedback/positioning model and its baselines.
//! - [`adblock`]: reconstruction-error detection of out-of-region inputs.

pub mod adblock;
pub mod channel;
pub mod codec;
pub mod fpnet;
pub mod metrics;
pub mod nn;
pub mod rng;

// Guide chapters, compiled as doc-tests so their snippets stay current.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channels.md")]
    mod channels {}
    #[doc = include_str!("../../../book/src/feedback.md")]
    mod feedback {}
    #[doc = include_str!("../../../book/src/link.md")]
    mod link {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/joint-model.md")]
    mod joint_model {}
    #[doc = include_str!("../../../book/src/anomaly.md")]
    mod anomaly {}
}
