//! Lipschitz-constrained invariant encoders certified by randomized
//! smoothing in their latent space.
//!
//! The numeric core is generic over the scalar type ([`Scalar`], implemented
//! for `f32` and `f64`); the aliases below fix it for the common cases.
//! Statistics (binomial bounds, normal quantiles, radii) are always `f64`.

pub mod certify;
pub mod data;
pub mod error;
pub mod eval;
pub mod nets;
pub mod numerics;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type MatrixF64 = numerics::Matrix<f64>;
pub type MatrixF32 = numerics::Matrix<f32>;
pub type ModelF64 = nets::Model<f64>;
pub type ModelF32 = nets::Model<f32>;
pub type TapeF64 = numerics::Tape<f64>;
