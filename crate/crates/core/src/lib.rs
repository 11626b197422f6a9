//! Synthetic fluorescence time-lapse generator.
//!
//! Particles (Gaussian spots) and background auto-fluorescence blobs live in an
//! elastic tissue that is deformed either by a damped spring lattice driven by
//! random contraction/elongation forces, or by externally supplied dense flow
//! fields. Every frame is rendered with Poisson shot noise and exported together
//! with ground-truth tracks. The [`eval`] module scores predicted tracks with a
//! distance-gated HOTA.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod io;
pub mod motion;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod scene;
pub mod shape;

pub use error::{Error, Result};

/// A point in pixel coordinates `(x, y, z)`. For 2D data `z` is always 0.
pub type Point = nalgebra::Vector3<f64>;

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
