//! Glue from a [`RunConfig`] to split, preprocessed data and trained models.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DataConfig, ModelConfig, RunConfig};
use crate::data::{
    class_weights, fit_schema, load_mnist_idx, split, synthetic_two_gaussians, Dataset, Preprocessor, RawTable,
    SchemaDecl, SplitSpec,
};
use crate::error::{Error, Result};
use crate::model::{pretrain_classifier, Activation, AutoencoderSpec, FrozenClassifier};
use crate::numerics::derive_seed;
use crate::training::{relabel, train, TrainedModel};

/// Raw data before splitting.
#[derive(Clone, Debug)]
pub enum DataSource {
    Tabular { table: RawTable, decl: SchemaDecl },
    Image { data: Dataset, pixels: usize },
}

impl DataSource {
    pub fn load(cfg: &DataConfig) -> Result<Self> {
        match cfg {
            DataConfig::Synthetic(spec) => {
                let table = synthetic_two_gaussians(spec)?;
                let decl = SchemaDecl::all_continuous(&table.columns, "label");
                Ok(DataSource::Tabular { table, decl })
            }
            DataConfig::Csv { path, schema } => {
                let decl = SchemaDecl::read(schema)?;
                let table = RawTable::read_csv(path)?;
                Ok(DataSource::Tabular { table, decl })
            }
            DataConfig::Mnist {
                images, labels, digits, ..
            } => {
                let data = load_mnist_idx(images, labels, *digits)?;
                let pixels = data.width();
                Ok(DataSource::Image { data, pixels })
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            DataSource::Tabular { table, .. } => table.len(),
            DataSource::Image { data, .. } => data.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One train/test split in preprocessed space.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub preprocessor: Preprocessor,
    /// Continuous test values outside the range fitted on the train rows.
    pub clipped: usize,
}

/// Keeps at most `cap` of `idx`, chosen by a seeded shuffle, in sorted order.
fn subsample(mut idx: Vec<usize>, cap: Option<usize>, seed: u64) -> Vec<usize> {
    match cap {
        Some(cap) if cap < idx.len() => {
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            idx.truncate(cap);
            idx.sort_unstable();
            idx
        }
        _ => idx,
    }
}

/// Splits the source, fits preprocessing on the train rows only and encodes
/// both parts. A test category unseen in training is an error.
pub fn prepare(source: &DataSource, spec: &SplitSpec, caps: (Option<usize>, Option<usize>)) -> Result<Prepared> {
    let (train_idx, test_idx) = split(source.len(), spec)?;
    let sub_seed = derive_seed(spec.seed, 2000 + spec.repetition);
    let train_idx = subsample(train_idx, caps.0, sub_seed);
    let test_idx = subsample(test_idx, caps.1, sub_seed.wrapping_add(1));
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::DegenerateData(format!(
            "split of {} rows leaves an empty part",
            source.len()
        )));
    }
    match source {
        DataSource::Tabular { table, decl } => {
            let schema = fit_schema(table, decl, &train_idx)?;
            let (train, _) = schema.preprocess_table(table, Some(&train_idx))?;
            let (test, clipped) = schema.preprocess_table(table, Some(&test_idx))?;
            Ok(Prepared {
                train,
                test,
                preprocessor: Preprocessor::Tabular(schema),
                clipped,
            })
        }
        DataSource::Image { data, pixels } => Ok(Prepared {
            train: data.subset(&train_idx),
            test: data.subset(&test_idx),
            preprocessor: Preprocessor::Image { pixels: *pixels },
            clipped: 0,
        }),
    }
}

/// Autoencoder shape for the given preprocessing. Image outputs use a
/// sigmoid, tabular continuous outputs a tanh.
pub fn autoencoder_spec(model: &ModelConfig, preprocessor: &Preprocessor) -> AutoencoderSpec {
    let layout = preprocessor.layout();
    let continuous_activation = match preprocessor {
        Preprocessor::Image { .. } => Activation::Sigmoid,
        Preprocessor::Tabular(_) => Activation::Tanh,
    };
    AutoencoderSpec {
        input_width: layout.width(),
        latent_dim: model.latent_dim,
        nuisance_dim: model.nuisance_dim,
        encoder_hidden: model.encoder_hidden.clone(),
        decoder_hidden: model.decoder_hidden.clone(),
        hidden_activation: model.activation,
        layout,
        continuous_activation,
    }
}

pub fn split_spec(cfg: &RunConfig, repetition: u64) -> SplitSpec {
    SplitSpec::new(cfg.seed, repetition)
}

pub fn caps(cfg: &RunConfig) -> (Option<usize>, Option<usize>) {
    match &cfg.data {
        DataConfig::Mnist {
            max_train, max_test, ..
        } => (*max_train, *max_test),
        _ => (None, None),
    }
}

/// Pretrains the classifier with class weights from the train labels.
pub fn fit_classifier(cfg: &RunConfig, prepared: &Prepared) -> Result<FrozenClassifier> {
    let weights = class_weights(&prepared.train.labels)?;
    pretrain_classifier(&prepared.train, &cfg.classifier, weights)
}

/// Relabels the train rows with the classifier and trains the model.
pub fn fit_model(cfg: &RunConfig, prepared: &Prepared, f: &FrozenClassifier) -> Result<TrainedModel> {
    let relabeled = relabel(&prepared.train, f)?;
    let spec = autoencoder_spec(&cfg.model, &prepared.preprocessor);
    train(&relabeled, &spec, &cfg.model.adversary_hidden, &cfg.training)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;

    #[test]
    fn prepare_fits_on_train_rows() {
        let source = DataSource::load(&DataConfig::Synthetic(SyntheticSpec {
            n_per_class: 50,
            ..Default::default()
        }))
        .unwrap();
        let p = prepare(&source, &SplitSpec::new(3, 0), (None, None)).unwrap();
        assert_eq!(p.train.len(), 80);
        assert_eq!(p.test.len(), 20);
        for i in 0..2 {
            let col: Vec<f64> = (0..p.train.len()).map(|r| p.train.x.row_slice(r)[i]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (0.0, 1.0));
        }
    }

    #[test]
    fn subsample_is_sorted_and_capped() {
        let idx = subsample((0..100).collect(), Some(10), 4);
        assert_eq!(idx.len(), 10);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample((0..5).collect(), Some(10), 4), vec![0, 1, 2, 3, 4]);
    }
}
