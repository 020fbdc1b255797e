//! Multi-granularity 3D gaussian segmentation with packed 32-bit binary
//! category codes.
//!
//! The crate trains compact coarse-to-fine binary codes on the gaussians of a
//! pre-reconstructed splatting scene from multi-view hierarchical masks, then
//! segments in 2D (label-map rendering) and 3D (code-table lookups) without
//! clustering or per-pixel distance computation. See the `examples/`
//! directory for one runnable walkthrough per capability.

pub mod codec;
pub mod config;
pub mod error;
pub mod eval;
pub mod formats;
pub mod loss;
pub mod mask;
pub mod oracle;
pub mod optim;
pub mod render;
pub mod sampler;
pub mod scene;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
