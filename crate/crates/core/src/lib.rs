//! Twin-image super-resolution by exact convex optimization.
//!
//! Reconstructs a high-resolution image from two low-resolution twins
//! offset by half a pixel, minimizing two coupled data-fitting terms plus
//! a convex self-similarity regularizer via ADMM with matrix-free linear
//! operators. Ships the simulation protocols, bicubic/IBP baselines,
//! PSNR/SSIM/registration metrics, and a dense small-instance oracle.

pub mod baselines;
pub mod degradation;
pub mod error;
pub mod image;
pub mod metrics;
pub mod oracle;
pub mod pgm;
pub mod selfsim;
pub mod simgen;
pub mod solver;

pub use error::{Error, Result};
pub use image::{crop, ntsc_luminance, Image, RgbImage};
