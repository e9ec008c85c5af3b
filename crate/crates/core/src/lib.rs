//! Boundary-aware segmentation toolkit.
//!
//! The crate provides, from the ground up:
//!
//! - [`tensor`] -- a dense-tensor engine with tape-based reverse-mode
//!   differentiation (32- or 64-bit, chosen once at the entry point);
//! - [`lss`] -- deterministic local structural-similarity maps
//!   (mean/max/std of patch cosine similarities), the structural prior
//!   and built-in explainability artifact;
//! - [`ltc`] -- a liquid time-constant recurrent cell with an
//!   input-dependent time constant, integrated by clamped Euler steps;
//! - [`loss`] -- BCE, soft Dice, Sobel-based boundary alignment, and the
//!   deep-supervision composite objective;
//! - [`metrics`] -- Dice, IoU and 95th-percentile Hausdorff distance with
//!   an exact brute-force oracle;
//! - [`net`]/[`train`] -- a small encoder-decoder that fuses the LSS map
//!   additively, refines a bottleneck token through the LTC cell, and
//!   trains end-to-end with Adam;
//! - [`synth`], [`pnm`], [`lssf`], [`checkpoint`], [`config`] -- seeded
//!   synthetic data and the portable file formats.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod image;
pub mod loss;
pub mod lss;
pub mod lssf;
pub mod ltc;
pub mod metrics;
pub mod net;
pub mod pnm;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Tape, Tensor};
