//! Alternating optimisation of the adversary, the Gaussian-mixture encoder
//! and the full autoencoder.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_loss, classification_loss, likelihood_loss, reconstruction_loss, total_autoencoder_loss,
    LikelihoodMode, LossWeights,
};
use crate::model::{
    bind, collect_grads, AdversarialClassifier, AutoencoderSpec, Bound, DisentangledAutoencoder, FrozenClassifier,
    Parameterized,
};
use crate::numerics::{derive_seed, Adam, AdamConfig, Graph, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_adversary: f64,
    pub lr_gm: f64,
    pub lr_autoencoder: f64,
    pub weights: LossWeights,
    pub likelihood_mode: LikelihoodMode,
    /// Inner iterations per epoch; `None` means `ceil(N / batch_size)`.
    pub iterations: Option<usize>,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 100,
            lr_adversary: 1e-3,
            lr_gm: 1e-3,
            lr_autoencoder: 1e-3,
            weights: LossWeights { lkd: 0.5, adv: 0.05 },
            likelihood_mode: LikelihoodMode::Mean,
            iterations: None,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.iterations == Some(0) {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        for (name, lr) in [
            ("lr_adversary", self.lr_adversary),
            ("lr_gm", self.lr_gm),
            ("lr_autoencoder", self.lr_autoencoder),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        LossWeights::new(self.weights.lkd, self.weights.adv)?;
        Ok(())
    }
}

/// Samples labelled by the frozen classifier rather than by ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct RelabeledDataset {
    data: Dataset,
}

impl RelabeledDataset {
    /// `ŷ_i = 1` iff `scores[i] ≥ 0.5`.
    pub fn from_scores(x: Tensor, scores: &[f64]) -> Result<Self> {
        let labels = scores.iter().map(|&s| u8::from(s >= 0.5)).collect();
        Ok(Self {
            data: Dataset::new(x, labels)?,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn labels(&self) -> &[u8] {
        &self.data.labels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub fn relabel(data: &Dataset, f: &FrozenClassifier) -> Result<RelabeledDataset> {
    let scores = f.score(&data.x)?;
    RelabeledDataset::from_scores(data.x.clone(), &scores)
}

/// Per-batch loss values of one autoencoder step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AeLosses {
    pub rec: f64,
    pub lkd: f64,
    pub adv: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GmLosses {
    pub cls: f64,
    pub lkd: f64,
    pub total: f64,
}

/// Epoch means of every loss term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochTelemetry {
    pub epoch: usize,
    pub rec: f64,
    pub cls: f64,
    pub lkd: f64,
    pub adv: f64,
    pub gm: f64,
    pub total: f64,
    pub seconds: f64,
}

impl EpochTelemetry {
    pub const HEADER: [&'static str; 8] = ["epoch", "L_rec", "L_cls", "L_lkd", "L_adv", "L_GM", "L_total", "seconds"];
}

/// Names the loss term when its forward pass produced a non-finite value.
fn named<T>(r: Result<T>, term: &'static str, epoch: usize) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite { .. } => Error::Diverged { term, epoch },
        e => e,
    })
}

fn check(term: &'static str, v: f64, epoch: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Diverged { term, epoch })
    }
}

/// Holds one Adam state per parameter group.
pub struct Trainer {
    cfg: TrainingConfig,
    opt_adversary: Adam,
    opt_gm: Adam,
    opt_autoencoder: Adam,
    epoch: usize,
}

impl Trainer {
    pub fn new(cfg: TrainingConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            opt_adversary: Adam::new(AdamConfig::with_lr(cfg.lr_adversary)),
            opt_gm: Adam::new(AdamConfig::with_lr(cfg.lr_gm)),
            opt_autoencoder: Adam::new(AdamConfig::with_lr(cfg.lr_autoencoder)),
            cfg,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.cfg
    }

    /// Descends `L_adv` in the adversary's parameters only; `z_u` enters as
    /// a constant.
    pub fn step_adversary(
        &mut self,
        model: &DisentangledAutoencoder,
        adv: &mut AdversarialClassifier,
        batch: &Dataset,
    ) -> Result<f64> {
        let z_u = model.encoder_u().infer(&batch.x)?;
        let mut g = Graph::new();
        let zv = g.constant(z_u);
        let bound = bind(&mut g, &adv.net, true);
        let e = self.epoch;
        let p = named(adv.net.forward(&mut g, zv, &bound), "L_adv", e)?;
        let loss = named(adversarial_loss(&mut g, p, &batch.labels), "L_adv", e)?;
        let value = check("L_adv", g.value(loss).item()?, self.epoch)?;
        g.backward(loss)?;
        collect_grads(&g, &bound, &mut adv.net)?;
        self.opt_adversary.step(&mut adv.net.params_mut())?;
        Ok(value)
    }

    /// Descends `L_cls + λ_lkd L_lkd` in the encoder and mixture parameters.
    pub fn step_gm(&mut self, model: &mut DisentangledAutoencoder, batch: &Dataset) -> Result<GmLosses> {
        let mut g = Graph::new();
        let x = g.constant(batch.x.clone());
        let enc = bind(&mut g, &model.encoder, true);
        let gm = model.gm.bind(&mut g, true);
        let e = self.epoch;
        let z = named(model.encoder.forward(&mut g, x, &enc), "L_GM", e)?;
        let cls = named(classification_loss(&mut g, z, &batch.labels, &gm), "L_cls", e)?;
        let lkd = named(
            likelihood_loss(&mut g, z, &batch.labels, &gm, self.cfg.likelihood_mode),
            "L_lkd",
            e,
        )?;
        let scaled = named(g.scale(lkd, self.cfg.weights.lkd), "L_GM", e)?;
        let total = named(g.add(cls, scaled), "L_GM", e)?;
        let out = GmLosses {
            cls: check("L_cls", g.value(cls).item()?, self.epoch)?,
            lkd: check("L_lkd", g.value(lkd).item()?, self.epoch)?,
            total: check("L_GM", g.value(total).item()?, self.epoch)?,
        };
        g.backward(total)?;
        collect_grads(&g, &enc, &mut model.encoder)?;
        let gm_bound = Bound::from_vars(vec![gm.mean[0], gm.mean[1], gm.log_var[0], gm.log_var[1]]);
        collect_grads(&g, &gm_bound, &mut model.gm)?;
        let mut params = model.encoder.params_mut();
        params.extend(model.gm.params_mut());
        self.opt_gm.step(&mut params)?;
        Ok(out)
    }

    /// Descends `L_rec + λ_lkd L_lkd − λ_adv L_adv` in both encoders and the
    /// decoder. Mixture and adversary parameters are constants.
    pub fn step_autoencoder(
        &mut self,
        model: &mut DisentangledAutoencoder,
        adv: &AdversarialClassifier,
        batch: &Dataset,
    ) -> Result<AeLosses> {
        let mut g = Graph::new();
        let x = g.constant(batch.x.clone());
        let b = model.bind(&mut g, true);
        let gm = model.gm.bind(&mut g, false);
        let adv_bound = bind(&mut g, &adv.net, false);
        let e = self.epoch;
        let z = named(model.encoder.forward(&mut g, x, &b.encoder), "L_rec", e)?;
        let z_u = named(model.encoder_u.forward(&mut g, x, &b.encoder_u), "L_rec", e)?;
        let latent = g.concat(z, z_u)?;
        let x_rec = named(model.decoder.forward(&mut g, latent, &b.decoder), "L_rec", e)?;
        let rec = named(reconstruction_loss(&mut g, x, x_rec), "L_rec", e)?;
        let lkd = named(
            likelihood_loss(&mut g, z, &batch.labels, &gm, self.cfg.likelihood_mode),
            "L_lkd",
            e,
        )?;
        let p = named(adv.net.forward(&mut g, z_u, &adv_bound), "L_adv", e)?;
        let adv_loss = named(adversarial_loss(&mut g, p, &batch.labels), "L_adv", e)?;
        let total = named(
            total_autoencoder_loss(&mut g, rec, lkd, adv_loss, self.cfg.weights),
            "L_total",
            e,
        )?;
        let out = AeLosses {
            rec: check("L_rec", g.value(rec).item()?, self.epoch)?,
            lkd: check("L_lkd", g.value(lkd).item()?, self.epoch)?,
            adv: check("L_adv", g.value(adv_loss).item()?, self.epoch)?,
            total: check("L_total", g.value(total).item()?, self.epoch)?,
        };
        g.backward(total)?;
        collect_grads(&g, &b.encoder, &mut model.encoder)?;
        collect_grads(&g, &b.encoder_u, &mut model.encoder_u)?;
        collect_grads(&g, &b.decoder, &mut model.decoder)?;
        let mut params = model.encoder.params_mut();
        params.extend(model.encoder_u.params_mut());
        params.extend(model.decoder.params_mut());
        self.opt_autoencoder.step(&mut params)?;
        Ok(out)
    }

    /// Runs `epochs` epochs. Each inner iteration takes an adversary step and
    /// a mixture step on one batch, then an autoencoder step on a fresh one.
    pub fn run(
        &mut self,
        model: &mut DisentangledAutoencoder,
        adv: &mut AdversarialClassifier,
        data: &RelabeledDataset,
        mut on_epoch: impl FnMut(&EpochTelemetry),
    ) -> Result<Vec<EpochTelemetry>> {
        let data = data.data();
        data.require_both_classes()?;
        if data.width() != model.input_width() {
            return Err(Error::dim(
                "train",
                format!("data width {} vs model input {}", data.width(), model.input_width()),
            ));
        }
        let n = data.len();
        let bs = self.cfg.batch_size.min(n);
        let iters = self.cfg.iterations.unwrap_or(n.div_ceil(bs));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, 30));
        let mut first: Vec<usize> = (0..n).collect();
        let mut second: Vec<usize> = (0..n).collect();
        let mut log = Vec::with_capacity(self.cfg.epochs);
        for epoch in 0..self.cfg.epochs {
            self.epoch = epoch + 1;
            let start = Instant::now();
            first.shuffle(&mut rng);
            second.shuffle(&mut rng);
            let mut sum = EpochTelemetry {
                epoch: epoch + 1,
                rec: 0.0,
                cls: 0.0,
                lkd: 0.0,
                adv: 0.0,
                gm: 0.0,
                total: 0.0,
                seconds: 0.0,
            };
            for it in 0..iters {
                let a = window(&first, it, bs);
                let batch = data.subset(a);
                self.step_adversary(model, adv, &batch)?;
                let gm = self.step_gm(model, &batch)?;
                let fresh = data.subset(window(&second, it, bs));
                let ae = self.step_autoencoder(model, adv, &fresh)?;
                sum.rec += ae.rec;
                sum.cls += gm.cls;
                sum.lkd += ae.lkd;
                sum.adv += ae.adv;
                sum.gm += gm.total;
                sum.total += ae.total;
            }
            let k = iters as f64;
            let t = EpochTelemetry {
                rec: sum.rec / k,
                cls: sum.cls / k,
                lkd: sum.lkd / k,
                adv: sum.adv / k,
                gm: sum.gm / k,
                total: sum.total / k,
                seconds: start.elapsed().as_secs_f64(),
                ..sum
            };
            on_epoch(&t);
            log.push(t);
        }
        Ok(log)
    }
}

/// The `it`-th batch of a permutation, wrapping around at the end.
fn window(perm: &[usize], it: usize, bs: usize) -> &[usize] {
    let n = perm.len();
    let start = (it * bs) % n;
    &perm[start..(start + bs).min(n)]
}

/// A trained model together with its adversary and per-epoch telemetry.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: DisentangledAutoencoder,
    pub adversary: AdversarialClassifier,
    pub telemetry: Vec<EpochTelemetry>,
}

/// Initialises all networks from `cfg.seed` and trains them.
pub fn train(
    data: &RelabeledDataset,
    spec: &AutoencoderSpec,
    adversary_hidden: &[usize],
    cfg: &TrainingConfig,
) -> Result<TrainedModel> {
    let mut model = DisentangledAutoencoder::new(spec, derive_seed(cfg.seed, 31))?;
    let mut adversary = AdversarialClassifier::new(spec.nuisance_dim, adversary_hidden, derive_seed(cfg.seed, 32))?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let telemetry = trainer.run(&mut model, &mut adversary, data, |_| {})?;
    Ok(TrainedModel {
        model,
        adversary,
        telemetry,
    })
}
