//! Invariant training: per-environment risk plus the dummy-scale penalty,
//! minimised by plain SGD with Gaussian augmentation of the latent code.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{EnvDataset, Environment};
use crate::error::{invalid, Error, Result};
use crate::nets::{LayerKind, Model, ModelSpec};
use crate::numerics::{Matrix, Rng, Tape, Var};
use crate::scalar::Scalar;

const TRAIN_STREAM: u64 = 0x0074_5241_494e;
const INIT_STREAM: u64 = 0x494e_4954;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Orthogonal encoder, invariance penalty, latent augmentation.
    Full,
    /// As `Full` with the penalty weight forced to zero.
    NoInvariance,
    /// Unconstrained dense encoder layers, penalty kept.
    NoLipschitz,
    /// Dense layers, plain risk, noise added to the raw input.
    GaussianBaseline,
}

/// Where training noise (and later smoothing noise) is injected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpace {
    Latent,
    Input,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoInvariance,
        Variant::NoLipschitz,
        Variant::GaussianBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoInvariance => "no_invariance",
            Self::NoLipschitz => "no_lipschitz",
            Self::GaussianBaseline => "gaussian_baseline",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| invalid(format!("unknown variant {name:?}")))
    }

    pub fn layer_kind(self) -> LayerKind {
        match self {
            Self::Full | Self::NoInvariance => LayerKind::Orthogonal,
            Self::NoLipschitz | Self::GaussianBaseline => LayerKind::Dense,
        }
    }

    pub fn uses_penalty(self) -> bool {
        matches!(self, Self::Full | Self::NoLipschitz)
    }

    pub fn noise_space(self) -> NoiseSpace {
        match self {
            Self::GaussianBaseline => NoiseSpace::Input,
            _ => NoiseSpace::Latent,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub sigma_train: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub variant: Variant,
    /// Leading epochs during which the penalty weight is capped at 1.
    pub penalty_warmup: usize,
    /// Step on `loss / max(1, weight)` so a large penalty weight does not
    /// blow up the effective learning rate.
    pub rescale: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e4,
            sigma_train: 0.12,
            lr: 0.1,
            epochs: 100,
            batch: 250,
            seed: 0,
            variant: Variant::Full,
            penalty_warmup: 10,
            rescale: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid(format!(
                "lambda must be a finite nonnegative number, got {}",
                self.lambda
            )));
        }
        if !(self.sigma_train >= 0.0) || !self.sigma_train.is_finite() {
            return Err(invalid(format!(
                "sigma_train must be nonnegative, got {}",
                self.sigma_train
            )));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(invalid("batch size must be positive"));
        }
        Ok(())
    }

    /// Penalty weight in force during `epoch`.
    pub fn penalty_weight(&self, epoch: usize) -> f64 {
        if !self.variant.uses_penalty() {
            0.0
        } else if epoch < self.penalty_warmup {
            self.lambda.min(1.0)
        } else {
            self.lambda
        }
    }
}

/// Builds the initial model for `variant` from a shared architecture.
pub fn init_model<T: Scalar>(spec: &ModelSpec, variant: Variant, seed: u64) -> Result<Model<T>> {
    let spec = ModelSpec {
        layer_kind: variant.layer_kind(),
        ..spec.clone()
    };
    Model::init(&spec, &mut Rng::seed(seed).fork(INIT_STREAM))
}

/// One environment's minibatch: input-mapped features, labels and the
/// latent noise to add to the code (if any).
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub x: Matrix<T>,
    pub y: Vec<usize>,
    pub latent_noise: Option<Matrix<T>>,
}

impl<T: Scalar> Batch<T> {
    /// Whole environment, no noise.
    pub fn clean(model: &Model<T>, env: &Environment) -> Result<Self> {
        Ok(Self {
            x: model.input_map.apply(&env.x.cast())?,
            y: env.y.clone(),
            latent_noise: None,
        })
    }
}

/// Per-environment values of one objective evaluation.
#[derive(Clone, Debug)]
pub struct Objective<T> {
    pub loss: T,
    pub risks: Vec<T>,
    pub penalties: Vec<T>,
    pub gradients: Vec<Matrix<T>>,
}

struct Recorded {
    loss: Var,
    risks: Vec<Var>,
    penalties: Vec<Var>,
}

fn record<T: Scalar>(
    tape: &mut Tape<T>,
    model: &Model<T>,
    batches: &[Batch<T>],
    weight: f64,
    scale: f64,
) -> Result<(crate::nets::Bound, Recorded)> {
    if batches.is_empty() {
        return Err(invalid("need at least one environment"));
    }
    let bound = model.bind(tape);
    let weights = model.record_weights(tape, &bound)?;
    let mut risks = Vec::with_capacity(batches.len());
    let mut penalties = Vec::with_capacity(batches.len());
    for b in batches {
        if b.y.is_empty() {
            return Err(invalid("environment batch is empty"));
        }
        let x = tape.leaf(b.x.clone());
        let mut z = model.record_encoder(tape, &bound, &weights, x)?;
        if let Some(noise) = &b.latent_noise {
            let eta = tape.leaf(noise.clone());
            z = tape.add(z, eta)?;
        }
        let logits = model.record_classifier(tape, &bound, z)?;
        risks.push(tape.softmax_ce(logits, &b.y)?);
        let dw = tape.irm_dw(logits, &b.y)?;
        penalties.push(tape.square(dw));
    }
    let mut loss = risks[0];
    for &r in &risks[1..] {
        loss = tape.add(loss, r)?;
    }
    if weight > 0.0 {
        let mut pen = penalties[0];
        for &p in &penalties[1..] {
            pen = tape.add(pen, p)?;
        }
        let weighted = tape.scale(pen, T::lit(weight));
        loss = tape.add(loss, weighted)?;
    }
    if scale != 1.0 {
        loss = tape.scale(loss, T::lit(scale));
    }
    Ok((bound, Recorded { loss, risks, penalties }))
}

/// `sum_d risk_d + weight * sum_d penalty_d`, times `scale`, with the
/// gradient for every parameter in [`Model::params`] order.
pub fn objective<T: Scalar>(model: &Model<T>, batches: &[Batch<T>], weight: f64, scale: f64) -> Result<Objective<T>> {
    let mut tape = Tape::new();
    let (bound, rec) = record(&mut tape, model, batches, weight, scale)?;
    let grads = tape.backward(rec.loss)?;
    let gradients = model
        .params()
        .iter()
        .zip(bound.leaves())
        .map(|(p, &v)| grads.get_or_zeros(v, p.shape()))
        .collect();
    Ok(Objective {
        loss: tape.scalar(rec.loss),
        risks: rec.risks.iter().map(|&v| tape.scalar(v)).collect(),
        penalties: rec.penalties.iter().map(|&v| tape.scalar(v)).collect(),
        gradients,
    })
}

/// Mean softmax cross-entropy of the model on one whole environment.
pub fn env_risk<T: Scalar>(model: &Model<T>, env: &Environment) -> Result<f64> {
    let obj = objective(model, &[Batch::clean(model, env)?], 0.0, 1.0)?;
    Ok(obj.risks[0].to_f64c())
}

/// Squared derivative, at scale 1, of the environment risk with respect to a
/// scalar multiplier on the logits.
pub fn irm_penalty<T: Scalar>(model: &Model<T>, env: &Environment) -> Result<f64> {
    let obj = objective(model, &[Batch::clean(model, env)?], 0.0, 1.0)?;
    Ok(obj.penalties[0].to_f64c())
}

/// `sum_d risk_d + lambda * sum_d penalty_d` on clean data, with the
/// variant's penalty switch applied.
pub fn total_loss<T: Scalar>(model: &Model<T>, envs: &[Environment], config: &TrainConfig) -> Result<f64> {
    let batches = envs
        .iter()
        .map(|e| Batch::clean(model, e))
        .collect::<Result<Vec<_>>>()?;
    let weight = if config.variant.uses_penalty() {
        config.lambda
    } else {
        0.0
    };
    Ok(objective(model, &batches, weight, 1.0)?.loss.to_f64c())
}

/// Classification accuracy of the model on a whole environment.
pub fn accuracy<T: Scalar>(model: &Model<T>, env: &Environment) -> Result<f64> {
    let predictions = model.logits(&env.x.cast())?.argmax_rows();
    let hits = predictions.iter().zip(&env.y).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / env.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub penalty_weight: f64,
    /// Means over the epoch's steps, one entry per training environment.
    pub risks: Vec<f64>,
    pub penalties: Vec<f64>,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub env_ids: Vec<usize>,
    pub epochs: Vec<EpochRecord>,
    /// Clean accuracy per training environment after the last step.
    pub final_accuracy: Vec<f64>,
    pub steps: usize,
    /// Largest `||W^T W - I||_F` over orthogonal layers, checked after every step.
    pub max_orthogonality_residual: f64,
}

impl TrainReport {
    /// CSV with columns `epoch,env_id,risk,penalty,total`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "env_id", "risk", "penalty", "total"])?;
        for e in &self.epochs {
            for (i, id) in self.env_ids.iter().enumerate() {
                out.write_record([
                    e.epoch.to_string(),
                    id.to_string(),
                    format!("{:.9e}", e.risks[i]),
                    format!("{:.9e}", e.penalties[i]),
                    format!("{:.9e}", e.total),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn orthogonality_residual<T: Scalar>(model: &Model<T>) -> Result<f64> {
    let mut worst = 0.0f64;
    for layer in &model.encoder {
        if let crate::nets::EncoderLayer::Orthogonal(_) = layer {
            worst = worst.max(layer.weight()?.orthogonality_residual().to_f64c());
        }
    }
    Ok(worst)
}

/// Minibatch SGD on the invariant objective.
///
/// Every step draws one batch per environment (a fresh shuffle each epoch;
/// `ceil(smallest env / batch)` steps per epoch) and fresh augmentation noise
/// per example.
pub fn train<T: Scalar>(init: &Model<T>, data: &EnvDataset, config: &TrainConfig) -> Result<(Model<T>, TrainReport)> {
    config.validate()?;
    data.validate()?;
    if init.input_dim() != data.dim() {
        return Err(invalid(format!(
            "model expects {} input features, dataset has {}",
            init.input_dim(),
            data.dim()
        )));
    }
    if init.classes() != data.classes {
        return Err(invalid(format!(
            "model has {} classes, dataset has {}",
            init.classes(),
            data.classes
        )));
    }
    let envs = &data.environments;
    let space = config.variant.noise_space();
    let raw: Vec<Matrix<T>> = envs.iter().map(|e| e.x.cast()).collect();
    let mapped: Vec<Matrix<T>> = match space {
        NoiseSpace::Latent => raw.iter().map(|x| init.input_map.apply(x)).collect::<Result<_>>()?,
        NoiseSpace::Input => Vec::new(),
    };
    let smallest = envs.iter().map(Environment::len).min().unwrap_or(0);
    let steps_per_epoch = smallest.div_ceil(config.batch);
    let mut rng = Rng::seed(config.seed).fork(TRAIN_STREAM);
    let mut model = init.clone();
    let mut report = TrainReport {
        env_ids: envs.iter().map(|e| e.domain_id).collect(),
        epochs: Vec::with_capacity(config.epochs),
        final_accuracy: Vec::new(),
        steps: 0,
        max_orthogonality_residual: orthogonality_residual(&model)?,
    };
    let lr = T::lit(config.lr);
    let mut orders: Vec<Vec<usize>> = envs.iter().map(|e| (0..e.len()).collect()).collect();
    for epoch in 0..config.epochs {
        let weight = config.penalty_weight(epoch);
        let scale = if config.rescale && weight > 1.0 {
            1.0 / weight
        } else {
            1.0
        };
        for order in &mut orders {
            rng.shuffle(order);
        }
        let mut risk_sum = vec![0.0; envs.len()];
        let mut pen_sum = vec![0.0; envs.len()];
        for step in 0..steps_per_epoch {
            let lo = step * config.batch;
            let hi = (lo + config.batch).min(smallest);
            let mut batches = Vec::with_capacity(envs.len());
            for (e, env) in envs.iter().enumerate() {
                let idx = &orders[e][lo..hi];
                let y: Vec<usize> = idx.iter().map(|&i| env.y[i]).collect();
                let batch = match space {
                    NoiseSpace::Latent => {
                        let latent_noise = (config.sigma_train > 0.0)
                            .then(|| rng.gauss_sample(idx.len(), model.latent_dim(), config.sigma_train))
                            .transpose()?;
                        Batch {
                            x: mapped[e].select_rows(idx),
                            y,
                            latent_noise,
                        }
                    }
                    NoiseSpace::Input => {
                        let mut x = raw[e].select_rows(idx);
                        if config.sigma_train > 0.0 {
                            let eta = rng.gauss_sample(idx.len(), x.cols(), config.sigma_train)?;
                            x = x.add(&eta)?;
                        }
                        Batch {
                            x: model.input_map.apply(&x)?,
                            y,
                            latent_noise: None,
                        }
                    }
                };
                batches.push(batch);
            }
            let obj = objective(&model, &batches, weight, scale)?;
            if !obj.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    detail: format!("objective is {}", obj.loss),
                });
            }
            for (p, g) in model.params_mut().into_iter().zip(&obj.gradients) {
                p.axpy(-lr, g)?;
            }
            if !model.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    detail: "parameters became non-finite".into(),
                });
            }
            report.max_orthogonality_residual = report.max_orthogonality_residual.max(orthogonality_residual(&model)?);
            for e in 0..envs.len() {
                risk_sum[e] += obj.risks[e].to_f64c();
                pen_sum[e] += obj.penalties[e].to_f64c();
            }
            report.steps += 1;
        }
        let denom = steps_per_epoch.max(1) as f64;
        let risks: Vec<f64> = risk_sum.iter().map(|s| s / denom).collect();
        let penalties: Vec<f64> = pen_sum.iter().map(|s| s / denom).collect();
        let total = risks.iter().sum::<f64>() + weight * penalties.iter().sum::<f64>();
        report.epochs.push(EpochRecord {
            epoch,
            penalty_weight: weight,
            risks,
            penalties,
            total,
        });
    }
    report.final_accuracy = envs.iter().map(|e| accuracy(&model, e)).collect::<Result<_>>()?;
    Ok((model, report))
}
