//! Synthetic structural causal model with a causal block `c` and a spurious
//! block `s`, mixed by a fixed orthogonal map.
//!
//! Per example: draw a clean class uniformly, draw `c ~ N(mu_class, scale^2 I)`,
//! flip the class with the label-noise rate to get the observed label `y`,
//! set `s = +m e_s` or `-m e_s` so that its sign agrees with `y` with the
//! environment's spurious strength, and emit `x = Q [c; s]`. The law of `y`
//! given `c` never depends on the environment; only `s` does.

use serde::{Deserialize, Serialize};

use crate::data::{EnvDataset, Environment};
use crate::error::{invalid, Result};
use crate::numerics::{Matrix, Rng};

/// Orthogonality tolerance on `||Q^T Q - I||_F` for the mixing map.
pub const MIXING_TOLERANCE: f64 = 1e-9;

/// Scalar knobs of the generator; expands to a [`ScmSpec`] with a seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScmParams {
    pub causal_dim: usize,
    pub spurious_dim: usize,
    /// Distance between the two class centres of `c`.
    pub causal_separation: f64,
    pub causal_scale: f64,
    pub spurious_magnitude: f64,
    /// Use `Q = I` instead of a seeded random orthogonal map.
    pub identity_mixing: bool,
}

impl Default for ScmParams {
    fn default() -> Self {
        Self {
            causal_dim: 8,
            spurious_dim: 2,
            causal_separation: 2.0,
            causal_scale: 0.5,
            spurious_magnitude: 1.0,
            identity_mixing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScmSpec {
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub causal_scale: f64,
    pub spurious_dim: usize,
    pub spurious_magnitude: f64,
    /// Orthogonal `(causal_dim + spurious_dim)`-square mixing map.
    pub mixing: Matrix<f64>,
    pub strengths: Vec<f64>,
    pub label_noise: f64,
}

/// Haar-distributed orthogonal matrix: Gram-Schmidt on a Gaussian draw.
pub fn random_orthogonal(n: usize, rng: &mut Rng) -> Matrix<f64> {
    loop {
        let g: Matrix<f64> = rng.gauss_sample(n, n, 1.0).expect("unit sigma");
        let mut cols: Vec<Vec<f64>> = (0..n).map(|c| (0..n).map(|r| g[(r, c)]).collect()).collect();
        let mut ok = true;
        for j in 0..n {
            for _pass in 0..2 {
                for k in 0..j {
                    let proj: f64 = cols[j].iter().zip(&cols[k]).map(|(a, b)| a * b).sum();
                    let basis = cols[k].clone();
                    for (a, b) in cols[j].iter_mut().zip(&basis) {
                        *a -= proj * b;
                    }
                }
            }
            let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            cols[j].iter_mut().for_each(|v| *v /= norm);
        }
        if ok {
            let mut q = Matrix::zeros(n, n);
            for (c, col) in cols.iter().enumerate() {
                for (r, &v) in col.iter().enumerate() {
                    q[(r, c)] = v;
                }
            }
            return q;
        }
    }
}

impl ScmSpec {
    /// Expands `params` into a full spec; the mixing map is drawn from `seed`.
    pub fn from_params(params: &ScmParams, strengths: &[f64], label_noise: f64, seed: u64) -> Result<Self> {
        if params.causal_dim == 0 {
            return Err(invalid("causal_dim must be positive"));
        }
        let half = params.causal_separation / 2.0;
        let mut mu1 = vec![0.0; params.causal_dim];
        mu1[0] = half;
        let mu0 = mu1.iter().map(|v| -v).collect();
        let dim = params.causal_dim + params.spurious_dim;
        let mixing = if params.identity_mixing {
            Matrix::identity(dim)
        } else {
            random_orthogonal(dim, &mut Rng::seed(seed).fork(0x4d49_5849_4e47))
        };
        let spec = Self {
            mu0,
            mu1,
            causal_scale: params.causal_scale,
            spurious_dim: params.spurious_dim,
            spurious_magnitude: params.spurious_magnitude,
            mixing,
            strengths: strengths.to_vec(),
            label_noise,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Default dimensions (`c` in R^8, `s` in R^2).
    pub fn standard(strengths: &[f64], label_noise: f64, seed: u64) -> Result<Self> {
        Self::from_params(&ScmParams::default(), strengths, label_noise, seed)
    }

    pub fn causal_dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn dim(&self) -> usize {
        self.causal_dim() + self.spurious_dim
    }

    /// Unit direction of the spurious signal inside the `s` block.
    pub fn spurious_direction(&self) -> Vec<f64> {
        let v = 1.0 / (self.spurious_dim as f64).sqrt();
        vec![v; self.spurious_dim]
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu0.len() != self.mu1.len() || self.mu0.is_empty() {
            return Err(invalid("class centres must have equal, positive length"));
        }
        if self.spurious_dim == 0 && self.spurious_magnitude != 0.0 {
            return Err(invalid("spurious magnitude needs spurious_dim >= 1"));
        }
        if !(self.causal_scale >= 0.0) || !(self.spurious_magnitude >= 0.0) {
            return Err(invalid("scales must be nonnegative"));
        }
        if self.strengths.is_empty() {
            return Err(invalid("need at least one environment"));
        }
        if let Some(s) = self.strengths.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(invalid(format!("spurious strength {s} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return Err(invalid(format!("label noise {} outside [0, 1]", self.label_noise)));
        }
        let n = self.dim();
        if self.mixing.shape() != (n, n) {
            return Err(invalid(format!(
                "mixing map must be {n}x{n}, got {:?}",
                self.mixing.shape()
            )));
        }
        let residual = self.mixing.orthogonality_residual();
        if !(residual <= MIXING_TOLERANCE) {
            return Err(invalid(format!(
                "mixing map is not orthogonal (residual {residual:.3e})"
            )));
        }
        Ok(())
    }

    /// `c`, the causal block of `Q^T x`.
    pub fn causal_block(&self, x: &[f64]) -> Vec<f64> {
        self.unmix(x)[..self.causal_dim()].to_vec()
    }

    /// Coordinate of `Q^T x` along the spurious direction.
    pub fn spurious_coordinate(&self, x: &[f64]) -> f64 {
        let latent = self.unmix(x);
        latent[self.causal_dim()..]
            .iter()
            .zip(self.spurious_direction())
            .map(|(a, b)| a * b)
            .sum()
    }

    fn unmix(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|c| (0..n).map(|r| self.mixing[(r, c)] * x[r]).sum())
            .collect()
    }
}

pub fn make_scm(spec: &ScmSpec, n_per_env: usize, rng: &mut Rng) -> Result<EnvDataset> {
    spec.validate()?;
    if n_per_env == 0 {
        return Err(invalid("n_per_env must be positive"));
    }
    let cd = spec.causal_dim();
    let n = spec.dim();
    let dir = spec.spurious_direction();
    let mut environments = Vec::with_capacity(spec.strengths.len());
    let mut latent = vec![0.0; n];
    for (domain_id, &strength) in spec.strengths.iter().enumerate() {
        let mut x = Matrix::zeros(n_per_env, n);
        let mut y = Vec::with_capacity(n_per_env);
        let mut spurious = Vec::with_capacity(n_per_env);
        for i in 0..n_per_env {
            let clean = rng.below(2);
            let mu = if clean == 1 { &spec.mu1 } else { &spec.mu0 };
            for (l, &m) in latent[..cd].iter_mut().zip(mu) {
                *l = m + spec.causal_scale * rng.std_normal();
            }
            let label = if rng.bernoulli(spec.label_noise) {
                1 - clean
            } else {
                clean
            };
            let attr = if rng.bernoulli(strength) { label } else { 1 - label };
            let sign = if attr == 1 { 1.0 } else { -1.0 };
            for (l, &d) in latent[cd..].iter_mut().zip(&dir) {
                *l = sign * spec.spurious_magnitude * d;
            }
            let row = x.row_mut(i);
            for (r, out) in row.iter_mut().enumerate() {
                *out = (0..n).map(|c| spec.mixing[(r, c)] * latent[c]).sum();
            }
            y.push(label);
            spurious.push(attr as u8);
        }
        environments.push(Environment {
            domain_id,
            x,
            y,
            spurious,
            spurious_strength: strength,
        });
    }
    let ds = EnvDataset {
        environments,
        classes: 2,
        generator: "scm".into(),
        seed: rng.seed_value(),
        label_noise: spec.label_noise,
    };
    ds.validate()?;
    Ok(ds)
}
