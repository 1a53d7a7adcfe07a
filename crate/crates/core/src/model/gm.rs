use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::model::network::Parameterized;
use crate::numerics::{derive_seed, seeded_normal_init, Graph, Tensor, Var};

/// `ln p(c)` for the fixed uniform two-class prior.
pub const LOG_PRIOR: f64 = -LN_2;

/// Two diagonal Gaussians over the label-relevant latent, one per class.
/// Covariances are stored as log-variances so they stay positive under any
/// update.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixtureHead {
    means: [Tensor; 2],
    log_vars: [Tensor; 2],
}

/// Graph handles for a bound [`GaussianMixtureHead`].
#[derive(Clone, Copy, Debug)]
pub struct GmVars {
    pub mean: [Var; 2],
    pub log_var: [Var; 2],
}

impl GaussianMixtureHead {
    /// Means drawn from `N(0, 1)`, unit variances.
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        let mean0 = seeded_normal_init(&[1, dim], derive_seed(seed, 0), 1.0)?;
        let mean1 = seeded_normal_init(&[1, dim], derive_seed(seed, 1), 1.0)?;
        Ok(Self {
            means: [mean0, mean1],
            log_vars: [Tensor::zeros(1, dim), Tensor::zeros(1, dim)],
        })
    }

    pub fn from_parts(means: [Vec<f64>; 2], log_vars: [Vec<f64>; 2]) -> Result<Self> {
        let d = means[0].len();
        if d == 0 || means[1].len() != d || log_vars.iter().any(|v| v.len() != d) {
            return Err(Error::dim("gaussian mixture", "component widths differ"));
        }
        let [m0, m1] = means;
        let [l0, l1] = log_vars;
        Ok(Self {
            means: [Tensor::matrix(1, d, m0)?, Tensor::matrix(1, d, m1)?],
            log_vars: [Tensor::matrix(1, d, l0)?, Tensor::matrix(1, d, l1)?],
        })
    }

    pub fn dim(&self) -> usize {
        self.means[0].cols()
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        self.means[class].data()
    }

    pub fn log_var(&self, class: usize) -> &[f64] {
        self.log_vars[class].data()
    }

    pub fn variance(&self, class: usize) -> Vec<f64> {
        self.log_vars[class].data().iter().map(|v| v.exp()).collect()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> GmVars {
        let mut put = |t: &Tensor| if trainable { g.param(t) } else { g.constant(t.clone()) };
        GmVars {
            mean: [put(&self.means[0]), put(&self.means[1])],
            log_var: [put(&self.log_vars[0]), put(&self.log_vars[1])],
        }
    }

    /// `log N(z; μ_c, diag(exp(log_var_c)))`.
    pub fn log_density(&self, z: &[f64], class: usize) -> f64 {
        log_gauss_diag(z, self.mean(class), self.log_var(class))
    }

    /// `p(c | z)` with uniform priors, via log-sum-exp.
    pub fn posterior(&self, z: &[f64], class: usize) -> f64 {
        let l0 = self.log_density(z, 0) + LOG_PRIOR;
        let l1 = self.log_density(z, 1) + LOG_PRIOR;
        let max = l0.max(l1);
        let lse = max + ((l0 - max).exp() + (l1 - max).exp()).ln();
        (if class == 0 { l0 } else { l1 } - lse).exp()
    }

    /// Squared Mahalanobis distance to component `class`.
    pub fn mahalanobis_sq(&self, z: &[f64], class: usize) -> f64 {
        z.iter()
            .zip(self.mean(class))
            .zip(self.log_var(class))
            .map(|((zv, m), lv)| (zv - m).powi(2) / lv.exp())
            .sum()
    }
}

/// Closed-form diagonal Gaussian log-density.
pub fn log_gauss_diag(z: &[f64], mean: &[f64], log_var: &[f64]) -> f64 {
    -0.5 * z
        .iter()
        .zip(mean)
        .zip(log_var)
        .map(|((zv, m), lv)| (2.0 * PI).ln() + lv + (zv - m).powi(2) / lv.exp())
        .sum::<f64>()
}

impl Parameterized for GaussianMixtureHead {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.means[0], &self.means[1], &self.log_vars[0], &self.log_vars[1]]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let [m0, m1] = &mut self.means;
        let [l0, l1] = &mut self.log_vars;
        vec![m0, m1, l0, l1]
    }
}
