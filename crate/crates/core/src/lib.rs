//! Training and evaluation toolkit for disentangled latent-variable models:
//! a small reverse-mode autodiff engine, declarative encoder/decoder
//! construction, pluggable variational loss terms composed into a single
//! objective, training schedulers, a deterministic synthetic
//! factors-of-variation dataset, and six disentanglement metrics.
//!
//! All numeric kernels are generic over the scalar type via [`scalar::Scalar`]
//! (f32 or f64). The concrete aliases below pin the default precision used by
//! the trainer and the checkpoint format: 64-bit floats.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod pgm;
pub mod prob;
pub mod rng;
pub mod scalar;
pub mod schedule;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default-precision tensor (f64).
pub type Tensor = tensor::Tensor<f64>;
/// Single-precision tensor.
pub type Tensor32 = tensor::Tensor<f32>;
/// Double-precision tensor, spelled explicitly.
pub type Tensor64 = tensor::Tensor<f64>;
