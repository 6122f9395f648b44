//! Sparse-view parallel-beam CT reconstruction.
//!
//! - [`projection`]: Joseph-method forward projector and its exact adjoint.
//! - [`classical`]: FBP, SART and SART interleaved with Chambolle TV denoising.
//! - [`data`]: phantoms, HU slice loading and sinogram noise.
//! - [`objective`]: differentiable loss terms and image quality metrics.
//! - [`dgr`]: reconstruction by fitting a randomly initialized SkipNet.
//! - [`io`]: CSV and binary containers for images and sinograms.

pub mod classical;
pub mod data;
pub mod dgr;
pub mod error;
pub mod io;
pub mod objective;
pub mod projection;

pub use error::{Error, Result};
pub use projection::{Geometry, Image2D, Sinogram};
