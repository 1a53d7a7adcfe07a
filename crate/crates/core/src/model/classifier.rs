use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::weighted_bce;
use crate::model::network::{bind, collect_grads, Activation, Mlp, NetworkSpec, Parameterized};
use crate::numerics::{derive_seed, fingerprint_all, Adam, AdamConfig, Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: vec![10, 4, 2],
            activation: Activation::Relu,
            epochs: 50,
            batch_size: 100,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// The classifier being explained. It exposes no mutable access to its
/// parameters; gradients can flow through it but are never collected.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenClassifier {
    net: Mlp,
}

impl FrozenClassifier {
    pub fn from_network(net: Mlp) -> Result<Self> {
        let last = net.spec().layers().last().expect("non-empty");
        if last.output != 1 || last.activation != Activation::Sigmoid {
            return Err(Error::Contract("classifier must end in a single sigmoid unit".into()));
        }
        Ok(Self { net })
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn input_width(&self) -> usize {
        self.net.spec().input_width()
    }

    /// `f(x)` per row.
    pub fn score(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok(self.net.infer(x)?.into_data())
    }

    pub fn score_one(&self, x: &[f64]) -> Result<f64> {
        Ok(self.score(&Tensor::row(x))?[0])
    }

    /// Graph forward pass with the parameters recorded as constants.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let bound = bind(g, &self.net, false);
        self.net.forward(g, x, &bound)
    }

    /// Fraction of rows with `(f(x) ≥ 0.5) == (y == 1)`.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let s = self.score(&data.x)?;
        let hits = s
            .iter()
            .zip(&data.labels)
            .filter(|(p, y)| (**p >= 0.5) == (**y == 1))
            .count();
        Ok(hits as f64 / data.len().max(1) as f64)
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint_all(self.net.params())
    }
}

/// Trains a classifier with class-weighted BCE and returns it frozen.
pub fn pretrain_classifier(data: &Dataset, cfg: &ClassifierConfig, weights: (f64, f64)) -> Result<FrozenClassifier> {
    data.require_both_classes()?;
    if cfg.batch_size == 0 {
        return Err(Error::Config("classifier batch size must be positive".into()));
    }
    let spec = NetworkSpec::mlp(data.width(), &cfg.hidden, 1, cfg.activation, Activation::Sigmoid)?;
    let mut net = Mlp::new(spec, derive_seed(cfg.seed, 20))?;
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 21));
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.subset(chunk);
            let mut g = Graph::new();
            let x = g.constant(batch.x);
            let bound = bind(&mut g, &net, true);
            let p = net.forward(&mut g, x, &bound)?;
            let loss = weighted_bce(&mut g, p, &batch.labels, weights)?;
            if !g.value(loss).item()?.is_finite() {
                return Err(Error::Diverged {
                    term: "classifier_bce",
                    epoch,
                });
            }
            g.backward(loss)?;
            collect_grads(&g, &bound, &mut net)?;
            opt.step(&mut net.params_mut())?;
        }
    }
    FrozenClassifier::from_network(net)
}
