//! Adversarial transfer learning for compound bioactivity prediction.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix it to `f64`, which the trainers and the CLI use.

pub mod dmpnn;
pub mod error;
pub mod features;
pub mod fingerprint;
pub mod gradcheck;
pub mod metrics;
pub mod molgraph;
pub mod nn;
pub mod pairing;
pub mod protocol;
pub mod ranking;
pub mod scalar;
pub mod tensor;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tape64 = nn::Tape<f64>;
pub type ParamSet64 = nn::ParamSet<f64>;
pub type Adam64 = nn::Adam<f64>;
