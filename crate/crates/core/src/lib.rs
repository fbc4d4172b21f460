//! Deep multi-view joint clustering.
//!
//! Per-view MLP autoencoders are pretrained on reconstruction, then their
//! encoders are fine-tuned together with cluster centroids under a KL
//! self-training objective. Three training modes are provided:
//!
//! - [`assignment::dec_train`]: one view, Student-t soft assignment against a
//!   sharpened target.
//! - [`dmjc_s::dmjc_s_train`]: views fused inside the soft assignment through
//!   learned per-cluster importance weights.
//! - [`dmjc_t::dmjc_t_train`]: per-view assignments against one fused target,
//!   with view weights re-solved on the simplex every epoch.
//!
//! [`pipeline`] wires these into an end-to-end run driven by a TOML config.

pub mod assignment;
pub mod autoencoder;
pub mod dmjc_s;
pub mod dmjc_t;
pub mod error;
pub mod kmeans;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod train;

pub use error::{Error, Result};
