//! LU solves and the symmetric eigenvalue routine used for spectral norms.

use crate::error::{invalid, Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Solves are refused above this 1-norm condition estimate.
pub const MAX_CONDITION: f64 = 1e12;

/// LU factorisation with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    n: usize,
    lu: Matrix<T>,
    perm: Vec<usize>,
    a_norm1: T,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::Shape {
                op: "lu",
                left: a.shape(),
                right: a.shape(),
            });
        }
        let n = a.rows();
        let a_norm1 = norm1(a);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut pivot = k;
            let mut best = lu[(k, k)].abs();
            for r in k + 1..n {
                let v = lu[(r, k)].abs();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
            if pivot != k {
                perm.swap(k, pivot);
                for c in 0..n {
                    let tmp = lu[(k, c)];
                    lu[(k, c)] = lu[(pivot, c)];
                    lu[(pivot, c)] = tmp;
                }
            }
            let diag = lu[(k, k)];
            for r in k + 1..n {
                let factor = lu[(r, k)] / diag;
                lu[(r, k)] = factor;
                if factor != T::zero() {
                    for c in k + 1..n {
                        let u = lu[(k, c)];
                        lu[(r, c)] -= factor * u;
                    }
                }
            }
        }
        Ok(Self { n, lu, perm, a_norm1 })
    }

    pub fn solve(&self, b: &Matrix<T>) -> Result<Matrix<T>> {
        if b.rows() != self.n {
            return Err(Error::Shape {
                op: "solve",
                left: (self.n, self.n),
                right: b.shape(),
            });
        }
        let n = self.n;
        let m = b.cols();
        let mut x = Matrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from_slice(b.row(p));
        }
        for j in 0..m {
            for i in 0..n {
                let mut s = x[(i, j)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, j)];
                for k in i + 1..n {
                    s -= self.lu[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = s / self.lu[(i, i)];
            }
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<Matrix<T>> {
        self.solve(&Matrix::identity(self.n))
    }

    /// `||A||_1 ||A^-1||_1`, computed from the explicit inverse.
    pub fn condition_estimate(&self) -> Result<f64> {
        let inv = self.inverse()?;
        Ok((self.a_norm1 * norm1(&inv)).to_f64c())
    }
}

fn norm1<T: Scalar>(a: &Matrix<T>) -> T {
    (0..a.cols())
        .map(|c| (0..a.rows()).map(|r| a[(r, c)].abs()).sum::<T>())
        .fold(T::zero(), T::max)
}

/// Solves `a x = b`, refusing singular or ill-conditioned systems.
pub fn solve<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let lu = Lu::factor(a)?;
    let condition = lu.condition_estimate()?;
    if !(condition < MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    lu.solve(b)
}

/// Inverse with the same conditioning guard as [`solve`].
pub fn inverse<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let lu = Lu::factor(a)?;
    let inv = lu.inverse()?;
    let condition = (lu.a_norm1 * norm1(&inv)).to_f64c();
    if !(condition < MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    Ok(inv)
}

/// Skew-symmetric part `(raw - raw^T) / 2` of a square matrix.
pub fn skew_part<T: Scalar>(raw: &Matrix<T>) -> Result<Matrix<T>> {
    if raw.rows() != raw.cols() {
        return Err(Error::Shape {
            op: "skew_part",
            left: raw.shape(),
            right: raw.shape(),
        });
    }
    Ok(raw.sub(&raw.transpose())?.scale(T::lit(0.5)))
}

/// Cayley transform of the skew part `A` of `raw`.
///
/// Returns `W = (I - A)(I + A)^-1` together with `(I + A)^-1`, which the
/// gradient tape keeps for the backward pass. `I + A` is always invertible
/// for skew `A` (its eigenvalues are `1 + i t`).
pub fn cayley_parts<T: Scalar>(raw: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let a = skew_part(raw)?;
    let n = a.rows();
    let eye = Matrix::identity(n);
    let m_inv = inverse(&eye.add(&a)?)?;
    let w = eye.sub(&a)?.matmul(&m_inv)?;
    Ok((w, m_inv))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &Matrix<f64>) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(invalid("symmetric_eigenvalues needs a square matrix"));
    }
    let mut m = a.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off <= 1e-30 * m.frobenius_norm().powi(2).max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Largest singular value, via the eigenvalues of `W^T W`.
pub fn spectral_norm<T: Scalar>(w: &Matrix<T>) -> Result<f64> {
    let w = w.cast::<f64>();
    let gram = w.transpose().matmul(&w)?;
    let eig = symmetric_eigenvalues(&gram)?;
    Ok(eig.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}
