//! Flow and FlowDelta reasoning over dialogue turns for conversational
//! machine comprehension, built on a small reverse-mode autodiff core.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the scalar to `f64`, which is what training
//! and gradient checking use.

pub mod attention;
pub mod error;
pub mod flow;
pub mod harness;
pub mod model;
pub mod recurrent;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;

pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type ParamSet64 = tensor::ParamSet<f64>;
