use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nets::layers::{groupsort_rows, DenseLayer, EncoderLayer, InputMap, OrthLinear};
use crate::numerics::{Gradients, Matrix, Rng, Tape, Var};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Cayley-orthogonal layers; the encoder is 1-Lipschitz.
    Orthogonal,
    /// Unconstrained dense layers (ablation and baseline).
    Dense,
}

/// Architecture description used to initialise a [`Model`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_map: InputMap,
    /// Encoder widths, one per layer; all equal to the input map's output.
    pub widths: Vec<usize>,
    pub classes: usize,
    pub group_size: usize,
    pub layer_kind: LayerKind,
}

impl ModelSpec {
    /// Square encoder of `depth` layers on raw `input_dim` features.
    pub fn square(input_dim: usize, depth: usize, classes: usize, layer_kind: LayerKind) -> Self {
        Self {
            input_map: InputMap::identity(input_dim),
            widths: vec![input_dim; depth],
            classes,
            group_size: 2,
            layer_kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.input_map.validate()?;
        let width = self.input_map.out_dim();
        if self.widths.is_empty() {
            return Err(invalid("encoder needs at least one layer"));
        }
        if let Some(&w) = self.widths.iter().find(|&&w| w != width) {
            return Err(invalid(format!(
                "encoder layers must be square at the input map width {width}, got width {w}"
            )));
        }
        if self.group_size == 0 || width % self.group_size != 0 {
            return Err(invalid(format!(
                "width {width} is not divisible by group size {}",
                self.group_size
            )));
        }
        if self.classes < 2 {
            return Err(invalid("need at least two classes"));
        }
        Ok(())
    }
}

/// Encoder `Psi` (fixed input map, then (layer, GroupSort) pairs) followed by
/// the unconstrained linear classifier `beta`.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub input_map: InputMap,
    pub encoder: Vec<EncoderLayer<T>>,
    pub group_size: usize,
    pub classifier: DenseLayer<T>,
    /// Lipschitz constant declared for the encoder at save/initialisation.
    pub declared_lipschitz: f64,
}

/// Effective encoder weights, computed once for repeated inference.
#[derive(Clone, Debug)]
pub struct Compiled<T> {
    weights: Vec<Matrix<T>>,
}

/// Parameter leaves of a model recorded on a tape.
#[derive(Clone, Debug)]
pub struct Bound {
    leaves: Vec<Var>,
}

impl Bound {
    pub fn leaves(&self) -> &[Var] {
        &self.leaves
    }
}

impl<T: Scalar> Model<T> {
    /// Cayley raw parameters `N(0, 0.1^2)`; dense encoder layers start at the
    /// Cayley image of the same draw so both kinds share a starting point;
    /// classifier fan-in scaled.
    pub fn init(spec: &ModelSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let width = spec.input_map.out_dim();
        let mut encoder = Vec::with_capacity(spec.widths.len());
        for _ in &spec.widths {
            let orth = OrthLinear::init(width, rng);
            encoder.push(match spec.layer_kind {
                LayerKind::Orthogonal => EncoderLayer::Orthogonal(orth),
                LayerKind::Dense => EncoderLayer::Dense(DenseLayer {
                    weight: crate::nets::cayley(&orth.skew)?,
                    bias: orth.bias,
                }),
            });
        }
        let classifier = DenseLayer::init_fan_in(width, spec.classes, rng);
        let mut model = Self {
            input_map: spec.input_map,
            encoder,
            group_size: spec.group_size,
            classifier,
            declared_lipschitz: 1.0,
        };
        model.declared_lipschitz = model.lipschitz_bound()?;
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.input_map.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.classifier.in_dim()
    }

    pub fn classes(&self) -> usize {
        self.classifier.out_dim()
    }

    pub fn layer_kind(&self) -> LayerKind {
        match self.encoder.first() {
            Some(EncoderLayer::Dense(_)) => LayerKind::Dense,
            _ => LayerKind::Orthogonal,
        }
    }

    /// Checks that every shape lines up.
    pub fn validate(&self) -> Result<()> {
        self.input_map.validate()?;
        let mut dim = self.input_map.out_dim();
        for layer in &self.encoder {
            if layer.in_dim() != dim {
                return Err(invalid(format!(
                    "encoder layer expects width {}, previous stage emits {dim}",
                    layer.in_dim()
                )));
            }
            if layer.bias().shape() != (1, layer.out_dim()) {
                return Err(invalid("encoder bias shape mismatch"));
            }
            dim = layer.out_dim();
            if self.group_size == 0 || dim % self.group_size != 0 {
                return Err(invalid(format!(
                    "width {dim} not divisible by group size {}",
                    self.group_size
                )));
            }
        }
        if self.classifier.in_dim() != dim {
            return Err(invalid(format!(
                "classifier expects {} latent features, encoder emits {dim}",
                self.classifier.in_dim()
            )));
        }
        if self.classifier.bias.shape() != (1, self.classifier.out_dim()) {
            return Err(invalid("classifier bias shape mismatch"));
        }
        Ok(())
    }

    /// Product of per-layer Lipschitz constants of the encoder (input map
    /// included at its bound of 1; classifier excluded).
    pub fn lipschitz_bound(&self) -> Result<f64> {
        self.encoder.iter().try_fold(1.0, |acc, l| Ok(acc * l.lipschitz()?))
    }

    pub fn compile(&self) -> Result<Compiled<T>> {
        let weights = self.encoder.iter().map(EncoderLayer::weight).collect::<Result<_>>()?;
        Ok(Compiled { weights })
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "encode",
                left: (x.rows(), self.input_dim()),
                right: x.shape(),
            });
        }
        Ok(())
    }

    /// `z = Psi(x)` for every row of `x`.
    pub fn encode(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.encode_compiled(&self.compile()?, x)
    }

    pub fn encode_compiled(&self, compiled: &Compiled<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let mut h = self.input_map.apply(x)?;
        for (layer, w) in self.encoder.iter().zip(&compiled.weights) {
            h = h.matmul_transposed(w)?.add_row(layer.bias())?;
            h = groupsort_rows(&h, self.group_size)?;
        }
        Ok(h)
    }

    /// Logits `beta(z)` for every row of `z`.
    pub fn classify(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        if z.cols() != self.latent_dim() {
            return Err(Error::Shape {
                op: "classify",
                left: (z.rows(), self.latent_dim()),
                right: z.shape(),
            });
        }
        self.classifier.forward(z)
    }

    pub fn logits(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.classify(&self.encode(x)?)
    }

    /// All trainable matrices in a fixed order: per encoder layer its weight
    /// parameter then bias, then classifier weight and bias.
    pub fn params(&self) -> Vec<&Matrix<T>> {
        let mut out: Vec<&Matrix<T>> = self.encoder.iter().flat_map(|l| l.params()).collect();
        out.push(&self.classifier.weight);
        out.push(&self.classifier.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut out: Vec<&mut Matrix<T>> = self.encoder.iter_mut().flat_map(|l| l.params_mut()).collect();
        out.push(&mut self.classifier.weight);
        out.push(&mut self.classifier.bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }

    /// Records every parameter as a tape leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        Bound {
            leaves: self.params().into_iter().map(|p| tape.leaf(p.clone())).collect(),
        }
    }

    /// Records `Psi(x)` on the tape. `x` must already be through the input map.
    ///
    /// Cayley weights are recorded once per call; share one encoder pass per
    /// tape where possible.
    pub fn record_encoder(&self, tape: &mut Tape<T>, bound: &Bound, weights: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for (i, _layer) in self.encoder.iter().enumerate() {
            let h1 = tape.matmul_t(h, weights[i])?;
            let h2 = tape.add_row(h1, bound.leaves[2 * i + 1])?;
            h = tape.groupsort(h2, self.group_size)?;
        }
        Ok(h)
    }

    /// Records the effective encoder weights (Cayley transforms or raw dense
    /// weights) so several batches can share them.
    pub fn record_weights(&self, tape: &mut Tape<T>, bound: &Bound) -> Result<Vec<Var>> {
        self.encoder
            .iter()
            .enumerate()
            .map(|(i, layer)| match layer {
                EncoderLayer::Orthogonal(_) => tape.cayley(bound.leaves[2 * i]),
                EncoderLayer::Dense(_) => Ok(bound.leaves[2 * i]),
            })
            .collect()
    }

    pub fn record_classifier(&self, tape: &mut Tape<T>, bound: &Bound, z: Var) -> Result<Var> {
        let n = bound.leaves.len();
        let h = tape.matmul_t(z, bound.leaves[n - 2])?;
        tape.add_row(h, bound.leaves[n - 1])
    }

    /// Records the full forward pass of one batch (already input-mapped).
    pub fn record_logits(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let weights = self.record_weights(tape, bound)?;
        let z = self.record_encoder(tape, bound, &weights, x)?;
        self.record_classifier(tape, bound, z)
    }

    /// Plain gradient step `p -= lr * grad` on every parameter.
    pub fn sgd_step(&mut self, bound: &Bound, grads: &Gradients<T>, lr: T) -> Result<()> {
        let leaves = bound.leaves.clone();
        for (p, v) in self.params_mut().into_iter().zip(leaves) {
            if let Some(g) = grads.get(v) {
                p.axpy(-lr, g)?;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        let layer = |l: &EncoderLayer<T>| match l {
            EncoderLayer::Orthogonal(o) => EncoderLayer::Orthogonal(OrthLinear {
                skew: crate::nets::SkewParam { raw: o.skew.raw.cast() },
                bias: o.bias.cast(),
            }),
            EncoderLayer::Dense(d) => EncoderLayer::Dense(DenseLayer {
                weight: d.weight.cast(),
                bias: d.bias.cast(),
            }),
        };
        Model {
            input_map: self.input_map,
            encoder: self.encoder.iter().map(layer).collect(),
            group_size: self.group_size,
            classifier: DenseLayer {
                weight: self.classifier.weight.cast(),
                bias: self.classifier.bias.cast(),
            },
            declared_lipschitz: self.declared_lipschitz,
        }
    }
}

/// Lipschitz bound of the encoder of `model`.
pub fn model_lipschitz_bound<T: Scalar>(model: &Model<T>) -> Result<f64> {
    model.lipschitz_bound()
}
