//! Multi-domain datasets with controllable spurious correlation.

pub mod cache;
pub mod cmnist;
pub mod idx;
pub mod scm;

use std::collections::BTreeSet;

use crate::error::{invalid, Result};
use crate::numerics::Matrix;

pub use cache::{dataset_bytes, load_dataset, read_dataset, save_dataset, write_dataset};
pub use cmnist::make_cmnist;
pub use idx::{parse_idx, read_idx, read_idx_images, read_idx_labels, IdxData};
pub use scm::{make_scm, ScmSpec};

/// One labelled example, borrowed from an [`Environment`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Example<'a> {
    pub x: &'a [f64],
    pub y: usize,
    pub domain_id: usize,
}

/// All examples of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    pub domain_id: usize,
    /// Rows are flattened inputs.
    pub x: Matrix<f64>,
    pub y: Vec<usize>,
    /// Value of the spurious attribute per example (colour index, or sign bit
    /// of the spurious coordinate). It agrees with `y` with probability
    /// `spurious_strength`.
    pub spurious: Vec<u8>,
    pub spurious_strength: f64,
}

impl Environment {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        Example {
            x: self.x.row(i),
            y: self.y[i],
            domain_id: self.domain_id,
        }
    }

    pub fn examples(&self) -> impl Iterator<Item = Example<'_>> {
        (0..self.len()).map(|i| self.example(i))
    }

    /// Fraction of examples whose spurious attribute matches the label.
    pub fn realized_strength(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let agree = self
            .y
            .iter()
            .zip(&self.spurious)
            .filter(|(&y, &s)| y == s as usize)
            .count();
        agree as f64 / self.len() as f64
    }

    /// Examples at the given positions, as a new environment.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            domain_id: self.domain_id,
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            spurious: indices.iter().map(|&i| self.spurious[i]).collect(),
            spurious_strength: self.spurious_strength,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvDataset {
    pub environments: Vec<Environment>,
    pub classes: usize,
    pub generator: String,
    pub seed: u64,
    pub label_noise: f64,
}

impl EnvDataset {
    pub fn dim(&self) -> usize {
        self.environments.first().map_or(0, |e| e.x.cols())
    }

    pub fn total_len(&self) -> usize {
        self.environments.iter().map(Environment::len).sum()
    }

    pub fn env(&self, domain_id: usize) -> Option<&Environment> {
        self.environments.iter().find(|e| e.domain_id == domain_id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.environments.is_empty() {
            return Err(invalid("dataset has no environments"));
        }
        if self.classes < 2 {
            return Err(invalid("dataset needs at least two classes"));
        }
        let dim = self.dim();
        let mut ids = BTreeSet::new();
        for env in &self.environments {
            if env.is_empty() {
                return Err(invalid(format!("environment {} is empty", env.domain_id)));
            }
            if !ids.insert(env.domain_id) {
                return Err(invalid(format!("duplicate domain id {}", env.domain_id)));
            }
            if !(0.0..=1.0).contains(&env.spurious_strength) {
                return Err(invalid(format!(
                    "spurious strength {} of environment {} outside [0, 1]",
                    env.spurious_strength, env.domain_id
                )));
            }
            if env.x.cols() != dim {
                return Err(invalid("environments disagree on input dimension"));
            }
            if env.x.rows() != env.len() || env.spurious.len() != env.len() {
                return Err(invalid(format!("environment {} has ragged columns", env.domain_id)));
            }
            if let Some(&y) = env.y.iter().find(|&&y| y >= self.classes) {
                return Err(invalid(format!("label {y} out of range for {} classes", self.classes)));
            }
            if !env.x.is_finite() {
                return Err(invalid(format!("environment {} has non-finite inputs", env.domain_id)));
            }
        }
        Ok(())
    }

    fn with_envs(&self, environments: Vec<Environment>) -> Self {
        Self {
            environments,
            classes: self.classes,
            generator: self.generator.clone(),
            seed: self.seed,
            label_noise: self.label_noise,
        }
    }
}

/// Partitions a dataset by domain id into training and test parts.
pub fn split(dataset: &EnvDataset, train_env_ids: &[usize], test_env_id: usize) -> Result<(EnvDataset, EnvDataset)> {
    if train_env_ids.is_empty() {
        return Err(invalid("need at least one training environment"));
    }
    if train_env_ids.contains(&test_env_id) {
        return Err(invalid(format!(
            "test environment {test_env_id} is also a training environment"
        )));
    }
    let mut seen = BTreeSet::new();
    let mut train = Vec::new();
    for &id in train_env_ids {
        if !seen.insert(id) {
            return Err(invalid(format!("training environment {id} listed twice")));
        }
        let env = dataset
            .env(id)
            .ok_or_else(|| invalid(format!("no environment with id {id}")))?;
        train.push(env.clone());
    }
    let test = dataset
        .env(test_env_id)
        .ok_or_else(|| invalid(format!("no environment with id {test_env_id}")))?
        .clone();
    Ok((dataset.with_envs(train), dataset.with_envs(vec![test])))
}
