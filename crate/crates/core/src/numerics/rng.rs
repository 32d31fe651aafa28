//! Seedable, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit seed. [`Rng::fork`]
//! derives a child seed from the parent seed and a tag, so children depend
//! only on `(seed, tag)` and never on how much of the parent was consumed.
//! This is what keeps parallel certification bit-identical across worker
//! counts.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn seed(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed_value(&self) -> u64 {
        self.seed
    }

    /// Independent child stream identified by `tag`.
    pub fn fork(&self, tag: u64) -> Self {
        Self::seed(mix64(self.seed ^ mix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    /// Child stream for a `(index, phase)` pair, e.g. one certified point and
    /// its selection or estimation phase.
    pub fn fork2(&self, index: u64, phase: u64) -> Self {
        self.fork(index).fork(phase)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn std_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }

    /// Matrix of i.i.d. `N(0, sigma^2)` entries.
    pub fn gauss_sample<T: Scalar>(&mut self, rows: usize, cols: usize, sigma: f64) -> Result<Matrix<T>> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(invalid(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        let mut m = Matrix::zeros(rows, cols);
        if sigma == 0.0 {
            return Ok(m);
        }
        self.fill_gauss(&mut m, sigma);
        Ok(m)
    }

    /// Overwrites `m` with `N(0, sigma^2)` draws in row-major order.
    pub fn fill_gauss<T: Scalar>(&mut self, m: &mut Matrix<T>, sigma: f64) {
        for v in m.data_mut() {
            *v = T::lit(sigma * self.std_normal());
        }
    }

    pub fn uniform_matrix<T: Scalar>(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix<T> {
        let data = (0..rows * cols).map(|_| T::lit(self.uniform_range(lo, hi))).collect();
        Matrix::new(rows, cols, data).expect("length matches")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_gives_zeros() {
        let mut rng = Rng::seed(1);
        let m: Matrix<f64> = rng.gauss_sample(3, 4, 0.0).unwrap();
        assert_eq!(m, Matrix::zeros(3, 4));
    }

    #[test]
    fn negative_sigma_rejected() {
        let mut rng = Rng::seed(1);
        assert!(rng.gauss_sample::<f64>(1, 1, -0.1).is_err());
    }

    #[test]
    fn equal_seeds_equal_draws() {
        let a: Matrix<f64> = Rng::seed(42).gauss_sample(5, 5, 1.0).unwrap();
        let b: Matrix<f64> = Rng::seed(42).gauss_sample(5, 5, 1.0).unwrap();
        assert_eq!(a, b);
        let c: Matrix<f64> = Rng::seed(43).gauss_sample(5, 5, 1.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn moments_match_sigma() {
        let sigma = 0.12;
        let m: Matrix<f64> = Rng::seed(2024).gauss_sample(1000, 1000, sigma).unwrap();
        let n = m.len() as f64;
        let mean = m.sum() / n;
        let var = m.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 4.0 * sigma / 1e3, "mean {mean}");
        assert!((var.sqrt() / sigma - 1.0).abs() <= 0.01, "std {}", var.sqrt());
    }

    #[test]
    fn forks_ignore_parent_consumption() {
        let parent = Rng::seed(9);
        let mut consumed = parent.clone();
        consumed.next_u64();
        assert_eq!(parent.fork(3).next_u64(), consumed.fork(3).next_u64());
        assert_ne!(parent.fork(3).next_u64(), parent.fork(4).next_u64());
        assert_ne!(parent.fork2(1, 0).next_u64(), parent.fork2(0, 1).next_u64());
    }
}
