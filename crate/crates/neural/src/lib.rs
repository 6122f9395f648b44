//! Small dense tensor engine with reverse-mode automatic differentiation,
//! the SkipNet encoder-decoder generator and the Adam optimizer.
//!
//! Everything is generic over [`Real`] so the same graph runs in `f32` for
//! reconstruction and in `f64` for finite-difference verification.

pub mod adam;
pub mod error;
pub mod gradcheck;
mod kernels;
pub mod params;
pub mod scalar;
pub mod skipnet;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::{NeuralError, Result};
pub use gradcheck::{grad_check, GradCheckOptions};
pub use kernels::resample::UpsampleMode;
pub use params::Params;
pub use scalar::Real;
pub use skipnet::{SkipNet, SkipNetConfig};
pub use tape::{Gradients, LinearMap, Tape, Var};
pub use tensor::Tensor;
