//! JSON run configuration. Every field but the dataset and the hidden
//! widths has a default; command-line flags override file values.

use std::path::{Path, PathBuf};

use hetrain::nn::depth::iteration_depth;
use hetrain::nn::{Hyperparams, TrainOptions, DEFAULT_MOMENTUM};
use hetrain::packing::min_dims;
use hetrain::params::{hes_max_logq, hes_min_degree, OUTER_PRIME_BITS};
use hetrain::{Architecture, SchemeParams, Security};
use serde::{Deserialize, Serialize};

use crate::dataset::LabelColumn;
use crate::error::{io_at, CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Headed CSV split by a seeded stratified shuffle.
    Csv {
        path: PathBuf,
        #[serde(default)]
        label_column: Option<LabelColumn>,
        /// Exact test-set size; otherwise `round(test_fraction · rows)`.
        #[serde(default)]
        test_rows: Option<usize>,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    /// Canonical train/test IDX pairs.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "default_pool")]
        pool: usize,
        #[serde(default)]
        classes: Option<usize>,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
        /// Scores on the last `holdout` training rows instead of the test
        /// files, for tuning without touching the test set.
        #[serde(default)]
        holdout: Option<usize>,
    },
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_pool() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub hidden: Vec<usize>,
    /// Only needed when planning parameters without loading the data.
    #[serde(default)]
    pub input: Option<usize>,
    #[serde(default)]
    pub classes: Option<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[default]
    Sim,
    Ckks,
}

/// Simulator noise. `per_op_sigma` defaults to `2^-scale_bits`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSettings {
    pub enabled: bool,
    pub per_op_sigma: Option<f64>,
    pub bootstrap_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSettings {
    /// Defaults to the smallest degree whose slots hold the grid (and the
    /// security table, when 128 bits are requested).
    pub poly_degree: Option<usize>,
    /// Defaults to the per-iteration depth plus `bootstrap_depth`.
    pub level: Option<usize>,
    pub scale_bits: u32,
    pub bootstrap_depth: usize,
    /// Defaults to 128 bits when the chosen degree allows it.
    pub security: Option<Security>,
    pub gadget_bits: u32,
    /// Half-width of the uniform error the CKKS debug bootstrap adds.
    pub bootstrap_error: f64,
}

impl Default for SchemeSettings {
    fn default() -> Self {
        Self {
            poly_degree: None,
            level: None,
            scale_bits: 40,
            bootstrap_depth: 16,
            security: None,
            gadget_bits: hetrain_ckks::DEFAULT_GADGET_BITS,
            bootstrap_error: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSettings {
    pub learning_rate: f64,
    #[serde(default)]
    pub decay: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub batch_size: usize,
}

fn default_momentum() -> f64 {
    DEFAULT_MOMENTUM
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Iterations between evaluations; 0 evaluates after the last one only.
    pub every: u64,
    /// Also score the training split (a full encrypted pass).
    pub train: bool,
    /// Track a plaintext twin for precision columns.
    pub shadow: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            every: 0,
            train: true,
            shadow: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub architecture: ArchitectureSpec,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub noise: NoiseSettings,
    #[serde(default)]
    pub scheme: SchemeSettings,
    pub hyper: HyperSettings,
    #[serde(default = "default_epochs")]
    pub epochs: u64,
    /// Overrides `epochs` when set.
    #[serde(default)]
    pub iterations: Option<u64>,
    #[serde(default)]
    pub options: TrainOptions,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_epochs() -> u64 {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

impl RunConfig {
    /// Parses a file and resolves relative dataset paths against its
    /// directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.dataset {
            DatasetSpec::Csv { path, .. } => fix(path),
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => [train_images, train_labels, test_images, test_labels]
                .into_iter()
                .for_each(fix),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.architecture;
        if a.hidden.is_empty() || a.hidden.contains(&0) || a.input == Some(0) || a.classes == Some(0) {
            return Err(CliError::Config(
                "architecture widths must be positive, with at least one block".into(),
            ));
        }
        if let DatasetSpec::Idx { pool: 0, .. } = self.dataset {
            return Err(CliError::Config("pooling factor must be at least 1".into()));
        }
        if let DatasetSpec::Csv { test_fraction, .. } = self.dataset {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(CliError::Config(format!(
                    "test_fraction {test_fraction} outside (0, 1)"
                )));
            }
        }
        if self.hyper.batch_size == 0 {
            return Err(CliError::Config("batch size must be at least 1".into()));
        }
        if self.scheme.gadget_bits == 0 || self.scheme.gadget_bits > 30 {
            return Err(CliError::Config("gadget_bits must lie in 1..=30".into()));
        }
        if !(self.scheme.bootstrap_error >= 0.0) || !(self.noise.bootstrap_sigma >= 0.0) {
            return Err(CliError::Config("noise magnitudes must be non-negative".into()));
        }
        Ok(())
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            learning_rate: self.hyper.learning_rate,
            decay: self.hyper.decay,
            momentum: self.hyper.momentum,
            iterations: self.iterations.unwrap_or(0),
            batch_size: self.hyper.batch_size,
            seed: self.seed,
        }
    }

    /// Scheme parameters for `arch` under the configured overrides.
    pub fn scheme_params(&self, arch: &Architecture) -> Result<SchemeParams> {
        let s = &self.scheme;
        let level = s.level.unwrap_or(iteration_depth(arch.blocks()) + s.bootstrap_depth);
        let total_bits = 2 * OUTER_PRIME_BITS + s.scale_bits * level as u32;
        let (r, c) = min_dims(arch)?;
        let slot_degree = (2 * r * c).max(4);
        let degree = match (s.poly_degree, s.security) {
            (Some(n), _) => n,
            (None, Some(Security::Bits(_))) => slot_degree.max(hes_min_degree(total_bits).unwrap_or(usize::MAX)),
            (None, _) => slot_degree,
        };
        let security = s.security.unwrap_or(match hes_max_logq(degree) {
            Some(max) if total_bits <= max => Security::Bits(128),
            _ => Security::InsecureTest,
        });
        Ok(SchemeParams::new(
            degree,
            level,
            s.scale_bits,
            s.bootstrap_depth,
            security,
        )?)
    }
}
