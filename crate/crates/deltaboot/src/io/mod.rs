//! Configuration and artifact formats: the experiment config file, dataset
//! sources (synthetic blobs and IDX image files), binary checkpoints, CSV
//! tables, SVG plots, and timing reports.

pub mod checkpoint;
pub mod idx;
pub mod svg;
pub mod synthetic;
pub mod table_csv;
pub mod timing;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{ActShape, Dataset, Layer, NetworkSpec};
use crate::seed::derive_seed;
use crate::train::{SeedMode, TrainConfig};

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "DELTABOOT_OUT";

/// Where the examples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian blobs; `n_train` and `n_test` must divide evenly into
    /// `classes` so the splits stay balanced.
    Synthetic {
        classes: usize,
        dim: usize,
        n_train: usize,
        n_test: usize,
        separation: f64,
    },
    /// IDX image/label file pairs, optionally truncated to a leading subset.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        n_train: Option<usize>,
        #[serde(default)]
        n_test: Option<usize>,
    },
}

/// Which classifier to build over the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkConfig {
    /// Fully connected ReLU stack; `hidden` may be empty for a softmax
    /// regression.
    Dense { hidden: Vec<usize> },
    /// Small convolutional stack; needs an image-shaped dataset.
    Lenet {
        channels: [usize; 3],
        dense_width: usize,
    },
}

fn default_lanczos_tol() -> f64 {
    1e-6
}

/// One experiment, fully specified. Unknown keys are rejected on load and the
/// resolved form is written next to the run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    /// L2 penalty rate, also the eigenvalue floor of the curvature matrix.
    pub reg_rate: f64,
    pub train: TrainConfig,
    pub base_seed: u64,
    pub seed_policy: SeedMode,
    /// Number of bootstrap replicates B.
    pub ensemble_size: usize,
    /// Eigenpair truncation points K to sweep, ascending.
    pub k_values: Vec<usize>,
    /// Ensemble-size prefixes to sweep; defaults to quarters of
    /// `ensemble_size`.
    #[serde(default)]
    pub b_values: Option<Vec<usize>>,
    pub repetitions: usize,
    #[serde(default = "default_lanczos_tol")]
    pub lanczos_tol: f64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 picks the machine default.
    #[serde(default)]
    pub threads: usize,
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetConfig::Synthetic {
                classes,
                dim,
                n_train,
                n_test,
                separation,
            } => {
                if *classes < 2 {
                    return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
                }
                if *dim == 0 {
                    return Err(Error::Config("dataset dim must be positive".into()));
                }
                if *n_train == 0 || *n_test == 0 {
                    return Err(Error::Config("n_train and n_test must be positive".into()));
                }
                if n_train % classes != 0 || n_test % classes != 0 {
                    return Err(Error::Config(format!(
                        "n_train {n_train} and n_test {n_test} must divide evenly into {classes} classes"
                    )));
                }
                if !separation.is_finite() || *separation < 0.0 {
                    return Err(Error::Config(format!(
                        "separation must be a non-negative real, got {separation}"
                    )));
                }
            }
            DatasetConfig::Idx {
                n_train, n_test, ..
            } => {
                for (name, n) in [("n_train", n_train), ("n_test", n_test)] {
                    if let Some(0) = n {
                        return Err(Error::Config(format!("{name} must be positive when given")));
                    }
                }
            }
        }
        match &self.network {
            NetworkConfig::Dense { hidden } => {
                if hidden.iter().any(|&h| h == 0) {
                    return Err(Error::Config("hidden widths must be positive".into()));
                }
            }
            NetworkConfig::Lenet {
                channels,
                dense_width,
            } => {
                if channels.iter().any(|&c| c == 0) || *dense_width == 0 {
                    return Err(Error::Config("channel counts and dense_width must be positive".into()));
                }
            }
        }
        if !(self.reg_rate > 0.0) || !self.reg_rate.is_finite() {
            return Err(Error::Config(format!(
                "reg_rate must be a positive real, got {}",
                self.reg_rate
            )));
        }
        self.train.validate()?;
        if self.ensemble_size < 2 {
            return Err(Error::Config(format!(
                "ensemble_size must be at least 2, got {}",
                self.ensemble_size
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be positive".into()));
        }
        if self.k_values.is_empty() {
            return Err(Error::Config("k_values must not be empty".into()));
        }
        if self.k_values[0] == 0 {
            return Err(Error::Config("k_values must be positive".into()));
        }
        for w in self.k_values.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(format!(
                    "k_values must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let b_values = self.b_values_or_default();
        if b_values.is_empty() {
            return Err(Error::Config("b_values must not be empty".into()));
        }
        for w in b_values.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(format!(
                    "b_values must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if b_values[0] < 2 || *b_values.last().expect("non-empty") > self.ensemble_size {
            return Err(Error::Config(format!(
                "b_values must lie in [2, {}], got {b_values:?}",
                self.ensemble_size
            )));
        }
        if !(self.lanczos_tol > 0.0) {
            return Err(Error::Config(format!(
                "lanczos_tol must be positive, got {}",
                self.lanczos_tol
            )));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("out_dir must not be empty".into()));
        }
        Ok(())
    }

    /// Ensemble-size prefixes to sweep: the configured list, or quarters of
    /// the ensemble when unset.
    pub fn b_values_or_default(&self) -> Vec<usize> {
        if let Some(vals) = &self.b_values {
            return vals.clone();
        }
        let b = self.ensemble_size;
        let mut vals: Vec<usize> = (1..=4).map(|q| q * b / 4).filter(|&v| v >= 2).collect();
        vals.dedup();
        if vals.is_empty() {
            vals.push(b);
        }
        vals
    }

    pub fn k_max(&self) -> usize {
        *self.k_values.last().expect("validated non-empty")
    }

    /// Apply command-line and environment overrides. Precedence for the
    /// output directory: `--out`, then the environment variable, then the
    /// config value.
    pub fn apply_overrides(&mut self, cli: &Overrides, env_out: Option<&str>) {
        if let Some(out) = &cli.out {
            self.out_dir = out.clone();
        } else if let Some(env) = env_out {
            if !env.is_empty() {
                self.out_dir = PathBuf::from(env);
            }
        }
        if let Some(threads) = cli.threads {
            self.threads = threads;
        }
        if let Some(seed) = cli.seed {
            self.base_seed = seed;
        }
    }

    /// Short dataset identifier used in table metadata and plot titles.
    pub fn dataset_id(&self) -> String {
        match &self.dataset {
            DatasetConfig::Synthetic { classes, dim, .. } => format!("blobs-c{classes}-d{dim}"),
            DatasetConfig::Idx { train_images, .. } => {
                let stem = train_images
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "idx".into());
                format!("idx-{stem}")
            }
        }
    }

    /// Materialize the train and test splits. Synthetic draws use seeds
    /// derived from `base_seed` with split-specific indices; IDX files are
    /// loaded and optionally truncated to their leading examples.
    pub fn build_dataset(&self) -> Result<(Dataset, Dataset)> {
        match &self.dataset {
            DatasetConfig::Synthetic {
                classes,
                dim,
                n_train,
                n_test,
                separation,
            } => {
                let train = synthetic::gen_synthetic(
                    *classes,
                    n_train / classes,
                    *dim,
                    *separation,
                    derive_seed(self.base_seed, "data", 0),
                )?;
                let test = synthetic::gen_synthetic(
                    *classes,
                    n_test / classes,
                    *dim,
                    *separation,
                    derive_seed(self.base_seed, "data", 1),
                )?;
                Ok((train, test))
            }
            DatasetConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                n_train,
                n_test,
            } => {
                let mut train = idx::load_idx(train_images, train_labels)?;
                let mut test = idx::load_idx(test_images, test_labels)?;
                if let Some(n) = n_train {
                    train = train.truncated(*n)?;
                }
                if let Some(n) = n_test {
                    test = test.truncated(*n)?;
                }
                Ok((train, test))
            }
        }
    }

    /// Build the classifier over a concrete dataset shape.
    pub fn build_network(&self, data: &Dataset) -> Result<NetworkSpec> {
        let shape = data.shape();
        let classes = data.num_classes();
        match &self.network {
            NetworkConfig::Dense { hidden } => {
                let mut layers = vec![Layer::Input(shape)];
                let mut width = shape.len();
                for &h in hidden {
                    layers.push(Layer::Dense {
                        inputs: width,
                        outputs: h,
                    });
                    layers.push(Layer::Relu);
                    width = h;
                }
                layers.push(Layer::Dense {
                    inputs: width,
                    outputs: classes,
                });
                layers.push(Layer::Softmax);
                NetworkSpec::new(layers, self.reg_rate)
            }
            NetworkConfig::Lenet {
                channels,
                dense_width,
            } => match shape {
                ActShape::Map { .. } => {
                    NetworkSpec::lenet(shape, *channels, *dense_width, classes, self.reg_rate)
                }
                ActShape::Flat { .. } => Err(Error::Config(
                    "lenet networks need an image-shaped dataset".into(),
                )),
            },
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text).map_err(|e| match e {
        Error::Json(parse) => Error::Config(format!(
            "{} is not a valid config: {parse}",
            path.display()
        )),
        other => other,
    })
}
