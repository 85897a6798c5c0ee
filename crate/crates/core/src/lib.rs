//! Fabry-Pérot resonator physics, neural surrogates of its transmission,
//! β-VAE latent analysis and surrogate-based inverse design.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`, with `*32` variants for `f32`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
mod fsutil;
pub mod inverse;
pub mod matrix;
pub mod neural;
pub mod normalize;
pub mod optics;
pub mod scalar;
pub mod spectral;
pub mod vae;

pub use error::{Error, Result};
pub use fsutil::write_atomic;
pub use scalar::Scalar;

pub type DesignParams = optics::DesignParams<f64>;
pub type SimplifiedParams = optics::SimplifiedParams<f64>;
pub type Spectrum = optics::Spectrum<f64>;
pub type Matrix = matrix::Matrix<f64>;
pub type Mlp = neural::MlpModel<f64>;
pub type Mlp32 = neural::MlpModel<f32>;
pub type Vae = vae::VaeModel<f64>;
pub type Vae32 = vae::VaeModel<f32>;
