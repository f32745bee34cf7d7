//! Seismic structural-heterogeneity detection.
//!
//! A fully convolutional segmentation network with a swappable attention
//! block (squeeze-and-excitation with spatial gating, or 2D relative
//! self-attention), a synthetic training-data generator, SEG-Y ingestion,
//! transfer learning with frozen layers, and pixelwise evaluation metrics.

pub mod attention;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod numcore;
pub mod pgm;
pub mod segy;
pub mod synthgen;
pub mod train;
#[cfg(any(test, feature = "oracles"))]
pub mod oracles;

pub use error::{Error, Result};
pub use numcore::{Prng, Scalar, Tensor};
