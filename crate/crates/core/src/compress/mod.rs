//! Post-training compression of the attention and MLP projections.
//!
//! Pruning and quantization come in a plain variant (global magnitude,
//! round-to-nearest) and a second-order variant that pushes each weight's
//! error onto not-yet-processed columns using the inverse input Hessian
//! gathered by [`calibrate`].

pub mod calib;
pub mod grid;
pub mod linalg;
pub mod linear;
pub mod model;
pub mod packed;
pub mod prune;
pub mod quant;
pub mod spec;

pub use calib::{calibrate, CalibStats, Hessian};
pub use grid::Grid;
pub use linear::{reconstruction_error, CompressedLinear, Payload, QuantPayload};
pub use model::{compress_model, CompressedModel};
pub use packed::BitMask;
pub use prune::{block_quotas, prune_count, prune_magnitude, prune_obs};
pub use quant::{joint_compress, quantize_obs, quantize_obs_traced, quantize_rtn};
pub use spec::{CalibSettings, CompressionSpec, Method};
