use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{cayley_parts, skew_part, spectral_norm, Matrix, Rng};
use crate::scalar::Scalar;

/// Unconstrained square matrix whose skew part drives a Cayley layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewParam<T> {
    pub raw: Matrix<T>,
}

impl<T: Scalar> SkewParam<T> {
    pub fn new(raw: Matrix<T>) -> Result<Self> {
        if raw.rows() != raw.cols() {
            return Err(invalid(format!("skew parameter must be square, got {:?}", raw.shape())));
        }
        Ok(Self { raw })
    }

    pub fn dim(&self) -> usize {
        self.raw.rows()
    }

    /// `A = (raw - raw^T) / 2`; exactly antisymmetric.
    pub fn skew(&self) -> Matrix<T> {
        skew_part(&self.raw).expect("square by construction")
    }
}

/// Orthogonal weight `W = (I - A)(I + A)^-1` of a skew parameter.
pub fn cayley<T: Scalar>(skew: &SkewParam<T>) -> Result<Matrix<T>> {
    Ok(cayley_parts(&skew.raw)?.0)
}

/// Sorts every contiguous group of `group_size` entries ascending.
pub fn groupsort<T: Scalar>(x: &[T], group_size: usize) -> Result<Vec<T>> {
    if group_size == 0 || x.len() % group_size != 0 {
        return Err(invalid(format!(
            "length {} is not divisible by group size {group_size}",
            x.len()
        )));
    }
    let mut out = x.to_vec();
    for chunk in out.chunks_mut(group_size) {
        chunk.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    }
    Ok(out)
}

/// Row-wise [`groupsort`] over a batch.
pub fn groupsort_rows<T: Scalar>(x: &Matrix<T>, group_size: usize) -> Result<Matrix<T>> {
    if group_size == 0 || x.cols() % group_size != 0 {
        return Err(invalid(format!(
            "row length {} is not divisible by group size {group_size}",
            x.cols()
        )));
    }
    Matrix::new(x.rows(), x.cols(), groupsort(x.data(), group_size)?)
}

/// Square Cayley-orthogonal layer `x -> W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthLinear<T> {
    pub skew: SkewParam<T>,
    pub bias: Matrix<T>,
}

impl<T: Scalar> OrthLinear<T> {
    pub fn init(dim: usize, rng: &mut Rng) -> Self {
        let raw = rng.gauss_sample(dim, dim, 0.1).expect("positive sigma");
        Self {
            skew: SkewParam { raw },
            bias: Matrix::zeros(1, dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.skew.dim()
    }

    pub fn out_dim(&self) -> usize {
        self.skew.dim()
    }
}

/// Unconstrained affine layer `x -> W x + b`, `W` stored `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weight: Matrix<T>, bias: Matrix<T>) -> Result<Self> {
        if bias.shape() != (1, weight.rows()) {
            return Err(Error::Shape {
                op: "dense bias",
                left: weight.shape(),
                right: bias.shape(),
            });
        }
        Ok(Self { weight, bias })
    }

    /// Fan-in scaled Gaussian weights, zero bias.
    pub fn init_fan_in(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let std = 1.0 / (in_dim.max(1) as f64).sqrt();
        Self {
            weight: rng.gauss_sample(out_dim, in_dim, std).expect("positive sigma"),
            bias: Matrix::zeros(1, out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Batch forward: rows of `x` are examples.
    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        x.matmul_transposed(&self.weight)?.add_row(&self.bias)
    }
}

/// One encoder layer. Each is followed by a GroupSort activation.
#[derive(Clone, Debug, PartialEq)]
pub enum EncoderLayer<T> {
    Orthogonal(OrthLinear<T>),
    Dense(DenseLayer<T>),
}

impl<T: Scalar> EncoderLayer<T> {
    pub fn in_dim(&self) -> usize {
        match self {
            Self::Orthogonal(l) => l.in_dim(),
            Self::Dense(l) => l.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Self::Orthogonal(l) => l.out_dim(),
            Self::Dense(l) => l.out_dim(),
        }
    }

    /// Effective weight matrix (`out x in`).
    pub fn weight(&self) -> Result<Matrix<T>> {
        match self {
            Self::Orthogonal(l) => cayley(&l.skew),
            Self::Dense(l) => Ok(l.weight.clone()),
        }
    }

    pub fn bias(&self) -> &Matrix<T> {
        match self {
            Self::Orthogonal(l) => &l.bias,
            Self::Dense(l) => &l.bias,
        }
    }

    /// l2 Lipschitz constant of the affine map: 1 for Cayley layers, the
    /// spectral norm for dense ones.
    pub fn lipschitz(&self) -> Result<f64> {
        match self {
            Self::Orthogonal(_) => Ok(1.0),
            Self::Dense(l) => spectral_norm(&l.weight),
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let w = self.weight()?;
        x.matmul_transposed(&w)?.add_row(self.bias())
    }

    pub(crate) fn params(&self) -> [&Matrix<T>; 2] {
        match self {
            Self::Orthogonal(l) => [&l.skew.raw, &l.bias],
            Self::Dense(l) => [&l.weight, &l.bias],
        }
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Matrix<T>; 2] {
        match self {
            Self::Orthogonal(l) => [&mut l.skew.raw, &mut l.bias],
            Self::Dense(l) => [&mut l.weight, &mut l.bias],
        }
    }
}

/// Fixed, untrained map applied to raw inputs before the first encoder layer.
/// Every variant has operator norm at most 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InputMap {
    /// Keep the first `out_dim` coordinates, padding with zeros if needed.
    PadTruncate { in_dim: usize, out_dim: usize },
    /// Sum each 2x2 pixel block of `channels` square planes and divide by 2.
    /// Rows of the map have unit norm and disjoint support.
    Pool2x2 { channels: usize, side: usize },
}

impl InputMap {
    pub fn identity(dim: usize) -> Self {
        Self::PadTruncate {
            in_dim: dim,
            out_dim: dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        match *self {
            Self::PadTruncate { in_dim, .. } => in_dim,
            Self::Pool2x2 { channels, side } => channels * side * side,
        }
    }

    pub fn out_dim(&self) -> usize {
        match *self {
            Self::PadTruncate { out_dim, .. } => out_dim,
            Self::Pool2x2 { channels, side } => channels * (side / 2) * (side / 2),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(*self, Self::PadTruncate { in_dim, out_dim } if in_dim == out_dim)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::PadTruncate { in_dim, out_dim } if in_dim == 0 || out_dim == 0 => {
                Err(invalid("input map dimensions must be positive"))
            }
            Self::Pool2x2 { channels, side } if channels == 0 || side < 2 || side % 2 != 0 => Err(invalid(format!(
                "pool2x2 needs channels >= 1 and an even side, got {channels}x{side}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn apply<T: Scalar>(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.in_dim() {
            return Err(Error::Shape {
                op: "input map",
                left: (x.rows(), self.in_dim()),
                right: x.shape(),
            });
        }
        if self.is_identity() {
            return Ok(x.clone());
        }
        let mut out = Matrix::zeros(x.rows(), self.out_dim());
        match *self {
            Self::PadTruncate { in_dim, out_dim } => {
                let keep = in_dim.min(out_dim);
                for r in 0..x.rows() {
                    out.row_mut(r)[..keep].copy_from_slice(&x.row(r)[..keep]);
                }
            }
            Self::Pool2x2 { channels, side } => {
                let half = side / 2;
                let scale = T::lit(0.5);
                for r in 0..x.rows() {
                    let src = x.row(r);
                    let dst = out.row_mut(r);
                    for ch in 0..channels {
                        let plane = &src[ch * side * side..(ch + 1) * side * side];
                        for i in 0..half {
                            for j in 0..half {
                                let s = plane[2 * i * side + 2 * j]
                                    + plane[2 * i * side + 2 * j + 1]
                                    + plane[(2 * i + 1) * side + 2 * j]
                                    + plane[(2 * i + 1) * side + 2 * j + 1];
                                dst[ch * half * half + i * half + j] = s * scale;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
