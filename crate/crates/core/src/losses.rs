//! Training objectives as differentiable graph expressions.
//!
//! Every function takes graph handles and returns a scalar `Var`. Labels are
//! passed as plain slices and enter the graph as constant masks.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{GmVars, LOG_PRIOR};
use crate::numerics::{Graph, Tensor, Var};

/// Clamp applied to probabilities before taking logs in cross-entropies.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lkd: f64,
    pub adv: f64,
}

impl LossWeights {
    pub fn new(lkd: f64, adv: f64) -> Result<Self> {
        if !(lkd >= 0.0 && adv >= 0.0 && lkd.is_finite() && adv.is_finite()) {
            return Err(Error::Config(format!(
                "loss weights must be finite and nonnegative (lkd={lkd}, adv={adv})"
            )));
        }
        Ok(Self { lkd, adv })
    }
}

/// How the likelihood term aggregates over a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LikelihoodMode {
    /// `−Σ_i log N(z_i; μ, Σ)`.
    Sum,
    /// The sum divided by the batch size.
    #[default]
    Mean,
}

fn label_masks(g: &mut Graph, labels: &[u8], rows: usize) -> Result<(Var, Var)> {
    if labels.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    if labels.len() != rows {
        return Err(Error::dim("labels", format!("{} labels for {rows} rows", labels.len())));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Contract("labels must be 0 or 1".into()));
    }
    let ones: Vec<f64> = labels.iter().map(|&y| f64::from(y)).collect();
    let zeros: Vec<f64> = ones.iter().map(|y| 1.0 - y).collect();
    Ok((g.constant(Tensor::column(&zeros)), g.constant(Tensor::column(&ones))))
}

/// Per-row `log N(z_i; μ, diag(exp(log_var)))` as an `(N, 1)` column.
pub fn log_gauss_rows(g: &mut Graph, z: Var, mean: Var, log_var: Var) -> Result<Var> {
    let diff = g.sub(z, mean)?;
    let sq = g.square(diff)?;
    let neg_lv = g.scale(log_var, -1.0)?;
    let precision = g.exp(neg_lv)?;
    let quad = g.mul(sq, precision)?;
    let terms = g.add(quad, log_var)?;
    let terms = g.add_scalar(terms, (2.0 * PI).ln())?;
    let total = g.sum_rows(terms)?;
    g.scale(total, -0.5)
}

/// `(N, 2)` matrix of `log N(z_i; μ_c, Σ_c) + log p(c)`.
fn log_joint(g: &mut Graph, z: Var, gm: &GmVars) -> Result<(Var, Var)> {
    let l0 = log_gauss_rows(g, z, gm.mean[0], gm.log_var[0])?;
    let l1 = log_gauss_rows(g, z, gm.mean[1], gm.log_var[1])?;
    Ok((l0, l1))
}

fn select(g: &mut Graph, a0: Var, a1: Var, m0: Var, m1: Var) -> Result<Var> {
    let p0 = g.mul(a0, m0)?;
    let p1 = g.mul(a1, m1)?;
    g.add(p0, p1)
}

/// `(N, 1)` column of `log p(c | z_i)` for class `c`.
pub fn gm_log_posterior(g: &mut Graph, z: Var, gm: &GmVars, class: usize) -> Result<Var> {
    let (l0, l1) = log_joint(g, z, gm)?;
    let j0 = g.add_scalar(l0, LOG_PRIOR)?;
    let j1 = g.add_scalar(l1, LOG_PRIOR)?;
    let both = g.concat(j0, j1)?;
    let lse = g.log_sum_exp_rows(both)?;
    g.sub(if class == 0 { j0 } else { j1 }, lse)
}

/// Mean cross-entropy `−(1/N) Σ_i log p(ŷ_i | z_i)`.
pub fn classification_loss(g: &mut Graph, z: Var, labels: &[u8], gm: &GmVars) -> Result<Var> {
    let rows = g.value(z).rows();
    let (m0, m1) = label_masks(g, labels, rows)?;
    let (l0, l1) = log_joint(g, z, gm)?;
    let j0 = g.add_scalar(l0, LOG_PRIOR)?;
    let j1 = g.add_scalar(l1, LOG_PRIOR)?;
    let both = g.concat(j0, j1)?;
    let lse = g.log_sum_exp_rows(both)?;
    let own = select(g, j0, j1, m0, m1)?;
    let nll = g.sub(lse, own)?;
    g.mean(nll)
}

/// `−Σ_i log N(z_i; μ_{ŷ_i}, Σ_{ŷ_i})`, optionally divided by `N`.
pub fn likelihood_loss(g: &mut Graph, z: Var, labels: &[u8], gm: &GmVars, mode: LikelihoodMode) -> Result<Var> {
    let rows = g.value(z).rows();
    let (m0, m1) = label_masks(g, labels, rows)?;
    let (l0, l1) = log_joint(g, z, gm)?;
    let own = select(g, l0, l1, m0, m1)?;
    let total = g.sum(own)?;
    match mode {
        LikelihoodMode::Sum => g.scale(total, -1.0),
        LikelihoodMode::Mean => g.scale(total, -1.0 / rows as f64),
    }
}

/// `L_cls + λ_lkd · L_lkd`.
pub fn gm_loss(
    g: &mut Graph,
    z: Var,
    labels: &[u8],
    gm: &GmVars,
    lambda_lkd: f64,
    mode: LikelihoodMode,
) -> Result<Var> {
    if !(lambda_lkd >= 0.0) {
        return Err(Error::Config(format!("λ_lkd must be nonnegative, got {lambda_lkd}")));
    }
    let cls = classification_loss(g, z, labels, gm)?;
    let lkd = likelihood_loss(g, z, labels, gm, mode)?;
    let lkd = g.scale(lkd, lambda_lkd)?;
    g.add(cls, lkd)
}

/// Binary cross-entropy of probabilities `p` (an `(N, 1)` column) against
/// `labels`, with per-class weights: `−(1/N) Σ_i w_{y_i} [y log p + (1−y) log(1−p)]`.
/// `p` is clamped to `[BCE_EPS, 1 − BCE_EPS]` first.
pub fn weighted_bce(g: &mut Graph, p: Var, labels: &[u8], weights: (f64, f64)) -> Result<Var> {
    let shape = g.value(p).shape().to_vec();
    if shape.len() != 2 || shape[1] != 1 {
        return Err(Error::dim("bce", format!("expected an (N, 1) column, got {shape:?}")));
    }
    let (m0, m1) = label_masks(g, labels, shape[0])?;
    let p = g.clamp(p, BCE_EPS, 1.0 - BCE_EPS)?;
    let log_p = g.log(p)?;
    let neg = g.scale(p, -1.0)?;
    let q = g.add_scalar(neg, 1.0)?;
    let log_q = g.log(q)?;
    let w0 = g.scale(m0, weights.0)?;
    let w1 = g.scale(m1, weights.1)?;
    let ll = select(g, log_q, log_p, w0, w1)?;
    let m = g.mean(ll)?;
    g.scale(m, -1.0)
}

/// Unweighted BCE of the adversary's predictions.
pub fn adversarial_loss(g: &mut Graph, p: Var, labels: &[u8]) -> Result<Var> {
    weighted_bce(g, p, labels, (1.0, 1.0))
}

/// `(1/N) Σ_i ‖x_i − x'_i‖²`.
pub fn reconstruction_loss(g: &mut Graph, x: Var, x_rec: Var) -> Result<Var> {
    if g.value(x).shape() != g.value(x_rec).shape() {
        return Err(Error::dim(
            "reconstruction",
            format!("{:?} vs {:?}", g.value(x).shape(), g.value(x_rec).shape()),
        ));
    }
    let rows = g.value(x).rows();
    let diff = g.sub(x, x_rec)?;
    let sq = g.square(diff)?;
    let total = g.sum(sq)?;
    g.scale(total, 1.0 / rows as f64)
}

/// `L_rec + λ_lkd · L_lkd − λ_adv · L_adv`.
pub fn total_autoencoder_loss(g: &mut Graph, rec: Var, lkd: Var, adv: Var, weights: LossWeights) -> Result<Var> {
    let lkd = g.scale(lkd, weights.lkd)?;
    let adv = g.scale(adv, -weights.adv)?;
    let partial = g.add(rec, lkd)?;
    g.add(partial, adv)
}
