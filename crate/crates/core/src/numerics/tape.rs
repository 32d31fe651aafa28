//! Reverse-mode gradients over matrix-level primitives.
//!
//! A [`Tape`] records one forward pass. Nodes are appended after their
//! inputs, so walking the node list backwards from the loss is a reverse
//! topological order and visits every node once.

use crate::error::{invalid, Error, Result};
use crate::numerics::linalg::cayley_parts;
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulT(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Scale(Var, T),
    Square(Var),
    SumAll(Var),
    GroupSort {
        input: Var,
        perm: Vec<usize>,
    },
    Cayley {
        raw: Var,
        w: Matrix<T>,
        m_inv: Matrix<T>,
    },
    SoftmaxCe {
        logits: Var,
        labels: Vec<usize>,
        probs: Matrix<T>,
    },
    IrmDw {
        logits: Var,
        labels: Vec<usize>,
        probs: Matrix<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar loss with respect to the leaves that influence it.
/// Interior gradients are released during the backward walk.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when `v` does not reach the loss.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix<T> {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

fn softmax_rows<T: Scalar>(logits: &Matrix<T>) -> Matrix<T> {
    let mut probs = logits.clone();
    for r in 0..probs.rows() {
        let row = probs.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    probs
}

fn check_labels(logits: &Matrix<impl Scalar>, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(invalid(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(invalid(format!(
            "label {bad} out of range for {} classes",
            logits.cols()
        )));
    }
    Ok(())
}

/// Per-row permutation that sorts each contiguous group ascending; ties keep
/// their original order. `out[i] = x[perm[i]]` over flat indices.
pub fn groupsort_permutation<T: Scalar>(x: &Matrix<T>, group: usize) -> Result<Vec<usize>> {
    if group == 0 || x.cols() % group != 0 {
        return Err(invalid(format!(
            "row length {} is not divisible by group size {group}",
            x.cols()
        )));
    }
    let mut perm: Vec<usize> = (0..x.len()).collect();
    for chunk in perm.chunks_mut(group) {
        let data = x.data();
        chunk.sort_by(|&a, &b| data[a].partial_cmp(&data[b]).unwrap_or(std::cmp::Ordering::Equal));
    }
    Ok(perm)
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    /// Records a leaf (parameter or constant input).
    pub fn leaf(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_transposed(self.value(b))?;
        Ok(self.push(value, Op::MatMulT(a, b)))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let value = self.value(x).add_row(self.value(row))?;
        Ok(self.push(value, Op::AddRow(x, row)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a, s))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * v);
        self.push(value, Op::Square(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    pub fn groupsort(&mut self, x: Var, group: usize) -> Result<Var> {
        let input = self.value(x);
        let perm = groupsort_permutation(input, group)?;
        let data = perm.iter().map(|&i| input.data()[i]).collect();
        let value = Matrix::new(input.rows(), input.cols(), data)?;
        Ok(self.push(value, Op::GroupSort { input: x, perm }))
    }

    /// Cayley transform of the skew part of `raw`: `W = (I - A)(I + A)^-1`
    /// with `A = (raw - raw^T) / 2`.
    pub fn cayley(&mut self, raw: Var) -> Result<Var> {
        let (w, m_inv) = cayley_parts(self.value(raw))?;
        Ok(self.push(w.clone(), Op::Cayley { raw, w, m_inv }))
    }

    /// Mean softmax cross-entropy of logit rows against labels.
    pub fn softmax_ce(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let l = self.value(logits);
        check_labels(l, labels)?;
        let probs = softmax_rows(l);
        let mut total = T::zero();
        for (r, &y) in labels.iter().enumerate() {
            let row = l.row(r);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            total += lse - row[y];
        }
        let n = T::lit(labels.len().max(1) as f64);
        let value = Matrix::filled(1, 1, total / n);
        Ok(self.push(
            value,
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Derivative at `w = 1` of the mean cross-entropy of `w * logits`,
    /// i.e. `mean_i <softmax(l_i) - onehot(y_i), l_i>`.
    pub fn irm_dw(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let l = self.value(logits);
        check_labels(l, labels)?;
        let probs = softmax_rows(l);
        let mut total = T::zero();
        for (r, &y) in labels.iter().enumerate() {
            let lr = l.row(r);
            let pr = probs.row(r);
            let expected: T = pr.iter().zip(lr).map(|(&p, &v)| p * v).sum();
            total += expected - lr[y];
        }
        let n = T::lit(labels.len().max(1) as f64);
        let value = Matrix::filled(1, 1, total / n);
        Ok(self.push(
            value,
            Op::IrmDw {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Propagates `d loss / d node` back to every node feeding `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(invalid(format!("backward needs a scalar loss, got shape {shape:?}")));
        }
        let mut grads: Vec<Option<Matrix<T>>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Matrix::filled(1, 1, T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    accumulate(&mut grads, *a, g.matmul_transposed(bv)?)?;
                    accumulate(&mut grads, *b, av.transpose().matmul(&g)?)?;
                }
                Op::MatMulT(a, b) => {
                    // y = a b^T: da = g b, db = g^T a
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    accumulate(&mut grads, *a, g.matmul(bv)?)?;
                    accumulate(&mut grads, *b, g.transpose().matmul(av)?)?;
                }
                Op::AddRow(x, row) => {
                    accumulate(&mut grads, *row, g.column_sums())?;
                    accumulate(&mut grads, *x, g)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone())?;
                    accumulate(&mut grads, *a, g)?;
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s))?,
                Op::Square(a) => {
                    let two_a = self.value(*a).scale(T::lit(2.0));
                    accumulate(&mut grads, *a, g.hadamard(&two_a)?)?;
                }
                Op::SumAll(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.data()[0]))?;
                }
                Op::GroupSort { input, perm } => {
                    let (r, c) = self.value(*input).shape();
                    let mut gi = Matrix::zeros(r, c);
                    for (out_pos, &src) in perm.iter().enumerate() {
                        gi.data_mut()[src] += g.data()[out_pos];
                    }
                    accumulate(&mut grads, *input, gi)?;
                }
                Op::Cayley { raw, w, m_inv } => {
                    // dW = -(I + W) dA M^-1  =>  G_A = -(I + W)^T G_W M^-T
                    let n = w.rows();
                    let i_plus_w = w.add(&Matrix::identity(n))?;
                    let ga = i_plus_w
                        .transpose()
                        .matmul(&g)?
                        .matmul_transposed(m_inv)?
                        .scale(-T::one());
                    let graw = ga.sub(&ga.transpose())?.scale(T::lit(0.5));
                    accumulate(&mut grads, *raw, graw)?;
                }
                Op::SoftmaxCe { logits, labels, probs } => {
                    let scale = g.data()[0] / T::lit(labels.len().max(1) as f64);
                    let mut gl = probs.clone();
                    for (r, &y) in labels.iter().enumerate() {
                        gl[(r, y)] -= T::one();
                    }
                    accumulate(&mut grads, *logits, gl.scale(scale))?;
                }
                Op::IrmDw { logits, labels, probs } => {
                    // d/dl_j [sum_k p_k l_k - l_y] = p_j (1 + l_j - sum_k p_k l_k) - [j == y]
                    let scale = g.data()[0] / T::lit(labels.len().max(1) as f64);
                    let l = self.value(*logits);
                    let mut gl = Matrix::zeros(l.rows(), l.cols());
                    for (r, &y) in labels.iter().enumerate() {
                        let lr = l.row(r);
                        let pr = probs.row(r);
                        let mean: T = pr.iter().zip(lr).map(|(&p, &v)| p * v).sum();
                        let out = gl.row_mut(r);
                        for j in 0..lr.len() {
                            out[j] = pr[j] * (T::one() + lr[j] - mean);
                        }
                        out[y] -= T::one();
                    }
                    accumulate(&mut grads, *logits, gl.scale(scale))?;
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => {
            if existing.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "accumulate",
                    left: existing.shape(),
                    right: g.shape(),
                });
            }
            existing.axpy(T::one(), &g)
        }
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
