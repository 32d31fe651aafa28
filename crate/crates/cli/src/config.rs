//! The run configuration file (TOML). Unknown keys are rejected and every
//! section is validated against the core's own preconditions before any
//! command starts work.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xdcert::certify::SmoothingConfig;
use xdcert::data::scm::ScmParams;
use xdcert::eval::RadiusGrid;
use xdcert::nets::{InputMap, ModelSpec};
use xdcert::training::{NoiseSpace, TrainConfig, Variant};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Default certification sample count for single runs.
pub const HEADLINE_N: u64 = 100_000;
/// Default for sweep child runs: ten times cheaper, slightly lower ceiling.
pub const SWEEP_N: u64 = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub certify: CertifySection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Scm,
    Cmnist,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcePaths {
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub generator: Generator,
    #[serde(default = "default_strengths")]
    pub strengths: Vec<f64>,
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Examples per environment (scm only).
    #[serde(default = "default_n_per_env")]
    pub n_per_env: usize,
    /// Use at most this many source images (cmnist only).
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default)]
    pub paths: SourcePaths,
    #[serde(default)]
    pub scm: ScmParams,
    /// Domain ids used for training; defaults to all but the last.
    #[serde(default)]
    pub train_envs: Option<Vec<usize>>,
    /// Held-out domain id; defaults to the last.
    #[serde(default)]
    pub test_env: Option<usize>,
}

fn default_strengths() -> Vec<f64> {
    vec![0.9, 0.8, 0.1]
}

fn default_label_noise() -> f64 {
    0.25
}

fn default_n_per_env() -> usize {
    2000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Encoder widths; empty means three layers at the input map width.
    pub widths: Vec<usize>,
    pub group_size: usize,
    pub variant: Variant,
    /// Defaults to the identity for scm and 2x2 pooling for cmnist.
    pub input_map: Option<InputMap>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            widths: Vec::new(),
            group_size: 2,
            variant: Variant::Full,
            input_map: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySection {
    pub sigma: f64,
    pub n0: u64,
    pub n: u64,
    pub alpha: f64,
    /// Defaults to the variant's own noise space.
    pub space: Option<NoiseSpace>,
    pub subsample: Option<usize>,
    /// Fill the `time_ms` column (makes records run-dependent).
    pub record_time: bool,
}

impl Default for CertifySection {
    fn default() -> Self {
        let s = SmoothingConfig::default();
        Self {
            sigma: s.sigma,
            n0: s.n0,
            n: HEADLINE_N,
            alpha: s.alpha,
            space: None,
            subsample: Some(500),
            record_time: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub grid: RadiusGrid,
    pub seeds: Vec<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            grid: RadiusGrid::standard(),
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

/// Axes expanded by the `sweep` command. Each non-empty axis becomes a set
/// of child runs; with every axis empty, the variants below are compared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
    pub variants: Vec<Variant>,
    /// Monte Carlo sample count for every child run.
    pub n: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            lambda: Vec::new(),
            sigma: Vec::new(),
            variants: Variant::ALL.to_vec(),
            n: SWEEP_N,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| CliError::validation(format!("config {} is not UTF-8", path.display())))?;
        let config = Self::parse(text)?;
        Ok((config, bytes))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config: Self = toml::from_str(text).map_err(|e| CliError::validation(format!("config: {e}")))?;
        // The training noise level follows the certification level unless set.
        let table: toml::Table = text.parse().map_err(|e| CliError::validation(format!("config: {e}")))?;
        let explicit = table
            .get("train")
            .and_then(|t| t.as_table())
            .is_some_and(|t| t.contains_key("sigma_train"));
        if !explicit {
            config.train.sigma_train = config.certify.sigma;
        }
        config.validate()?;
        Ok(config)
    }

    /// `--seed` replaces every seed in the file.
    pub fn override_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        self.train.seed = seed;
        self.eval.seeds = vec![seed];
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = |what: &str, r: xdcert::Result<()>| r.map_err(|e| CliError::validation(format!("{what}: {e}")));
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::validation(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let d = &self.dataset;
        if d.strengths.len() < 2 {
            return Err(CliError::validation(
                "dataset.strengths needs at least two environments",
            ));
        }
        if let Some(s) = d.strengths.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(CliError::validation(format!("dataset.strengths: {s} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&d.label_noise) {
            return Err(CliError::validation(format!(
                "dataset.label_noise: {} outside [0, 1]",
                d.label_noise
            )));
        }
        match d.generator {
            Generator::Scm if d.n_per_env == 0 => {
                return Err(CliError::validation("dataset.n_per_env must be positive"));
            }
            Generator::Cmnist if d.paths.images.is_none() || d.paths.labels.is_none() => {
                return Err(CliError::validation(
                    "missing source files: the cmnist generator needs dataset.paths.images and dataset.paths.labels",
                ));
            }
            _ => {}
        }
        let (train_envs, test_env) = self.env_split();
        let envs = d.strengths.len();
        if test_env >= envs || train_envs.iter().any(|&e| e >= envs) {
            return Err(CliError::validation(format!(
                "dataset: environment ids must be below {envs}"
            )));
        }
        if train_envs.is_empty() || train_envs.contains(&test_env) {
            return Err(CliError::validation(
                "dataset: training and test environments must be nonempty and disjoint",
            ));
        }
        v("model", self.model_spec().validate())?;
        v("train", self.train.validate())?;
        v("certify", self.smoothing(self.model.variant).validate())?;
        if self.certify.subsample == Some(0) {
            return Err(CliError::validation("certify.subsample must be positive"));
        }
        v("eval.grid", self.eval.grid.validate())?;
        if self.eval.seeds.is_empty() {
            return Err(CliError::validation("eval.seeds must not be empty"));
        }
        for &l in &self.sweep.lambda {
            v(
                "sweep.lambda",
                TrainConfig {
                    lambda: l,
                    ..self.train.clone()
                }
                .validate(),
            )?;
        }
        for &s in &self.sweep.sigma {
            let smoothing = SmoothingConfig {
                sigma: s,
                ..self.smoothing(self.model.variant)
            };
            v("sweep.sigma", smoothing.validate())?;
        }
        Ok(())
    }

    /// Raw input dimension implied by the dataset section.
    pub fn input_dim(&self) -> usize {
        match self.dataset.generator {
            Generator::Scm => self.dataset.scm.causal_dim + self.dataset.scm.spurious_dim,
            Generator::Cmnist => 2 * 28 * 28,
        }
    }

    pub fn input_map(&self) -> InputMap {
        self.model.input_map.unwrap_or(match self.dataset.generator {
            Generator::Scm => InputMap::identity(self.input_dim()),
            Generator::Cmnist => InputMap::Pool2x2 { channels: 2, side: 28 },
        })
    }

    pub fn model_spec(&self) -> ModelSpec {
        let input_map = self.input_map();
        let widths = if self.model.widths.is_empty() {
            vec![input_map.out_dim(); 3]
        } else {
            self.model.widths.clone()
        };
        ModelSpec {
            input_map,
            widths,
            classes: 2,
            group_size: self.model.group_size,
            layer_kind: self.model.variant.layer_kind(),
        }
    }

    pub fn train_config(&self, variant: Variant) -> TrainConfig {
        TrainConfig {
            variant,
            ..self.train.clone()
        }
    }

    pub fn smoothing(&self, variant: Variant) -> SmoothingConfig {
        let c = &self.certify;
        SmoothingConfig {
            sigma: c.sigma,
            n0: c.n0,
            n: c.n,
            alpha: c.alpha,
            space: c.space.unwrap_or(variant.noise_space()),
        }
    }

    pub fn env_split(&self) -> (Vec<usize>, usize) {
        let last = self.dataset.strengths.len().saturating_sub(1);
        let test = self.dataset.test_env.unwrap_or(last);
        let train = self
            .dataset
            .train_envs
            .clone()
            .unwrap_or_else(|| (0..self.dataset.strengths.len()).filter(|&e| e != test).collect());
        (train, test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema_version = 1\n[dataset]\ngenerator = \"scm\"\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.dataset.strengths, vec![0.9, 0.8, 0.1]);
        assert_eq!(c.env_split(), (vec![0, 1], 2));
        assert_eq!(c.model_spec().widths, vec![10, 10, 10]);
        assert_eq!(c.smoothing(Variant::GaussianBaseline).space, NoiseSpace::Input);
        assert_eq!(c.smoothing(Variant::Full).space, NoiseSpace::Latent);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::parse(&format!("{MINIMAL}bogus = 1\n")).is_err());
        assert!(RunConfig::parse(&format!("{MINIMAL}[train]\nlamda = 3.0\n")).is_err());
        assert!(RunConfig::parse(&format!("{MINIMAL}[train]\nlambda = -3.0\n")).is_err());
        assert!(RunConfig::parse(&format!("{MINIMAL}[certify]\nalpha = 1.5\n")).is_err());
        assert!(RunConfig::parse(&format!("{MINIMAL}[model]\nvariant = \"fancy\"\n")).is_err());
        assert!(RunConfig::parse(&MINIMAL.replace("= 1\n", "= 2\n")).is_err());
        let err = RunConfig::parse("schema_version = 1\n[dataset]\ngenerator = \"cmnist\"\n").unwrap_err();
        assert!(err.to_string().contains("missing source files"));
    }

    #[test]
    fn training_noise_follows_certification_noise_unless_set() {
        let c = RunConfig::parse(&format!("{MINIMAL}[certify]\nsigma = 0.25\n")).unwrap();
        assert_eq!(c.train.sigma_train, 0.25);
        let c = RunConfig::parse(&format!(
            "{MINIMAL}[certify]\nsigma = 0.25\n[train]\nsigma_train = 0.1\n"
        ))
        .unwrap();
        assert_eq!(c.train.sigma_train, 0.1);
        assert_eq!((c.certify.n, c.sweep.n), (HEADLINE_N, SWEEP_N));
    }

    #[test]
    fn seed_override_reaches_every_section() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.override_seed(42);
        assert_eq!((c.dataset.seed, c.train.seed, c.eval.seeds.clone()), (42, 42, vec![42]));
    }
}
