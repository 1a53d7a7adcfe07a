//! Run configuration read from TOML. Every key is optional; defaults depend
//! on the dataset family (image or tabular). Unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! kind = "synthetic"
//! n_per_class = 1000
//!
//! [training]
//! epochs = 30
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::{MnistDigits, SyntheticSpec};
use crate::error::{Error, Result};
use crate::generation::{GdlConfig, GenerationConfig, Selection};
use crate::losses::{LikelihoodMode, LossWeights};
use crate::model::{Activation, ClassifierConfig};
use crate::training::TrainingConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Image,
    Tabular,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataConfig {
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        schema: PathBuf,
    },
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        digits: MnistDigits,
        /// Keep at most this many training images after the split.
        max_train: Option<usize>,
        max_test: Option<usize>,
    },
}

impl DataConfig {
    pub fn family(&self) -> Family {
        match self {
            DataConfig::Mnist { .. } => Family::Image,
            _ => Family::Tabular,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub nuisance_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub adversary_hidden: Vec<usize>,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub classifier: ClassifierConfig,
    pub training: TrainingConfig,
    pub generation: GenerationConfig,
    pub gdl: GdlConfig,
    pub repetitions: usize,
    /// Cap on base-class test queries per repetition.
    pub max_queries: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    seed: Option<u64>,
    repetitions: Option<usize>,
    max_queries: Option<usize>,
    out: Option<PathBuf>,
    data: Option<RawData>,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    classifier: RawClassifier,
    #[serde(default)]
    training: RawTraining,
    #[serde(default)]
    generation: RawGeneration,
    #[serde(default)]
    gdl: RawGdl,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawData {
    Synthetic {
        n_per_class: Option<usize>,
        means: Option<[[f64; 2]; 2]>,
        stddev: Option<f64>,
        nuisance_dims: Option<usize>,
    },
    Csv {
        path: PathBuf,
        schema: PathBuf,
    },
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        base_digit: Option<u8>,
        target_digit: Option<u8>,
        max_train: Option<usize>,
        max_test: Option<usize>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    latent_dim: Option<usize>,
    nuisance_dim: Option<usize>,
    encoder_hidden: Option<Vec<usize>>,
    decoder_hidden: Option<Vec<usize>>,
    adversary_hidden: Option<Vec<usize>>,
    activation: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClassifier {
    hidden: Option<Vec<usize>>,
    activation: Option<String>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    lr_adversary: Option<f64>,
    lr_gm: Option<f64>,
    lr_autoencoder: Option<f64>,
    lambda_lkd: Option<f64>,
    lambda_adv: Option<f64>,
    likelihood: Option<String>,
    iterations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeneration {
    grid: Option<usize>,
    boundary: Option<f64>,
    tol: Option<f64>,
    refine: Option<bool>,
    bisection_cap: Option<usize>,
    selection: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGdl {
    lr: Option<f64>,
    max_iterations: Option<usize>,
    temperature: Option<f64>,
}

fn activation(s: Option<String>, default: Activation) -> Result<Activation> {
    match s {
        Some(s) => s.parse().map_err(|_| Error::Config(format!("unknown activation {s:?}"))),
        None => Ok(default),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawRun = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::resolve(raw, None)
    }

    /// Relative data paths are resolved against the config file's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: RawRun =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::resolve(raw, path.parent())
    }

    /// Defaults for a synthetic run.
    pub fn synthetic() -> Self {
        Self::resolve(RawRun::default(), None).expect("defaults are valid")
    }

    fn resolve(raw: RawRun, base: Option<&Path>) -> Result<Self> {
        let rel = |p: PathBuf| match base {
            Some(b) if p.is_relative() && !b.as_os_str().is_empty() => b.join(p),
            _ => p,
        };
        let seed = raw.seed.unwrap_or(0);
        let data = match raw.data.unwrap_or(RawData::Synthetic {
            n_per_class: None,
            means: None,
            stddev: None,
            nuisance_dims: None,
        }) {
            RawData::Synthetic {
                n_per_class,
                means,
                stddev,
                nuisance_dims,
            } => {
                let d = SyntheticSpec::default();
                DataConfig::Synthetic(SyntheticSpec {
                    n_per_class: n_per_class.unwrap_or(d.n_per_class),
                    means: means.unwrap_or(d.means),
                    stddev: stddev.unwrap_or(d.stddev),
                    nuisance_dims: nuisance_dims.unwrap_or(d.nuisance_dims),
                    seed,
                })
            }
            RawData::Csv { path, schema } => DataConfig::Csv {
                path: rel(path),
                schema: rel(schema),
            },
            RawData::Mnist {
                images,
                labels,
                base_digit,
                target_digit,
                max_train,
                max_test,
            } => DataConfig::Mnist {
                images: rel(images),
                labels: rel(labels),
                digits: MnistDigits {
                    base: base_digit.unwrap_or(1),
                    target: target_digit.unwrap_or(7),
                },
                max_train,
                max_test,
            },
        };
        let family = data.family();
        let image = family == Family::Image;

        let m = raw.model;
        let model = ModelConfig {
            latent_dim: m.latent_dim.unwrap_or(if image { 15 } else { 3 }),
            nuisance_dim: m.nuisance_dim.unwrap_or(if image { 25 } else { 6 }),
            encoder_hidden: m
                .encoder_hidden
                .unwrap_or_else(|| if image { vec![256, 128] } else { vec![12, 24, 12, 6] }),
            decoder_hidden: m
                .decoder_hidden
                .unwrap_or_else(|| if image { vec![128, 256] } else { vec![6, 12, 24] }),
            adversary_hidden: m
                .adversary_hidden
                .unwrap_or_else(|| if image { vec![64, 32] } else { vec![12, 6] }),
            activation: activation(m.activation, if image { Activation::Relu } else { Activation::LeakyRelu })?,
        };
        if model.latent_dim == 0 || model.nuisance_dim == 0 {
            return Err(Error::Config("latent dimensions must be positive".into()));
        }

        let c = raw.classifier;
        let cd = ClassifierConfig::default();
        let classifier = ClassifierConfig {
            hidden: c
                .hidden
                .unwrap_or_else(|| if image { vec![128, 64, 32] } else { cd.hidden.clone() }),
            activation: activation(c.activation, Activation::Relu)?,
            epochs: c.epochs.unwrap_or(if image { 5 } else { cd.epochs }),
            batch_size: c.batch_size.unwrap_or(cd.batch_size),
            lr: c.lr.unwrap_or(cd.lr),
            seed,
        };
        if classifier.batch_size == 0 {
            return Err(Error::Config("classifier.batch_size must be positive".into()));
        }

        let t = raw.training;
        let lr = t.lr.unwrap_or(1e-3);
        let likelihood_mode = match t.likelihood.as_deref() {
            None | Some("mean") => LikelihoodMode::Mean,
            Some("sum") => LikelihoodMode::Sum,
            Some(other) => return Err(Error::Config(format!("unknown likelihood mode {other:?}"))),
        };
        let training = TrainingConfig {
            epochs: t.epochs.unwrap_or(if image { 20 } else { 100 }),
            batch_size: t.batch_size.unwrap_or(100),
            lr_adversary: t.lr_adversary.unwrap_or(lr),
            lr_gm: t.lr_gm.unwrap_or(lr),
            lr_autoencoder: t.lr_autoencoder.unwrap_or(lr),
            weights: LossWeights::new(
                t.lambda_lkd.unwrap_or(if image { 0.1 } else { 0.5 }),
                t.lambda_adv.unwrap_or(0.05),
            )?,
            likelihood_mode,
            iterations: t.iterations,
            seed,
        };
        training.validate()?;

        let g = raw.generation;
        let gd = GenerationConfig::default();
        let generation = GenerationConfig {
            grid: g.grid.unwrap_or(gd.grid),
            boundary: g.boundary.unwrap_or(gd.boundary),
            tol: g.tol.unwrap_or(gd.tol),
            refine: g.refine.unwrap_or(gd.refine),
            bisection_cap: g.bisection_cap.unwrap_or(gd.bisection_cap),
            selection: match g.selection.as_deref() {
                None | Some("smallest") => Selection::Smallest,
                Some("largest") => Selection::Largest,
                Some(other) => return Err(Error::Config(format!("unknown selection {other:?}"))),
            },
        };
        generation.validate()?;

        let b = raw.gdl;
        let bd = GdlConfig::default();
        let gdl = GdlConfig {
            lr: b.lr.unwrap_or(bd.lr),
            max_iterations: b.max_iterations.unwrap_or(bd.max_iterations),
            boundary: generation.boundary,
            tol: generation.tol,
            temperature: b.temperature.unwrap_or(bd.temperature),
        };
        gdl.validate()?;

        let repetitions = raw.repetitions.unwrap_or(5);
        if repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        Ok(Self {
            seed,
            data,
            model,
            classifier,
            training,
            generation,
            gdl,
            repetitions,
            max_queries: raw.max_queries,
            out: raw.out,
        })
    }

    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.classifier.seed = seed;
        self.training.seed = seed;
        if let DataConfig::Synthetic(s) = &mut self.data {
            s.seed = seed;
        }
        self
    }
}
