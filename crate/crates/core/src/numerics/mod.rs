//! Dense linear algebra, random streams, special functions and the gradient
//! tape shared by every other module.

pub mod linalg;
mod matrix;
mod rng;
pub mod special;
pub mod tape;

pub use linalg::{cayley_parts, inverse, skew_part, solve, spectral_norm};
pub use matrix::{argmax, dot, l2_distance, l2_norm, Matrix};
pub use rng::{mix64, Rng};
pub use special::{
    binomial_cdf, binomial_test_half, binomial_upper_tail, clopper_pearson_lower, std_normal_cdf, std_normal_inv_cdf,
};
pub use tape::{Gradients, Tape, Var};

use crate::error::Result;
use crate::scalar::Scalar;

/// Matrix of i.i.d. `N(0, sigma^2)` entries drawn from `rng`.
pub fn gauss_sample<T: Scalar>(rng: &mut Rng, rows: usize, cols: usize, sigma: f64) -> Result<Matrix<T>> {
    rng.gauss_sample(rows, cols, sigma)
}
