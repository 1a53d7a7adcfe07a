use std::f64::consts::{LN_2, PI};

use latent_cf::losses::*;
use latent_cf::model::{log_gauss_diag, GaussianMixtureHead, GmVars};
use latent_cf::numerics::{Graph, Tensor, Var};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn head(m0: &[f64], m1: &[f64]) -> GaussianMixtureHead {
    let d = m0.len();
    GaussianMixtureHead::from_parts([m0.to_vec(), m1.to_vec()], [vec![0.0; d], vec![0.0; d]]).unwrap()
}

fn eval(f: impl FnOnce(&mut Graph) -> Var) -> f64 {
    let mut g = Graph::inference();
    let out = f(&mut g);
    g.value(out).item().unwrap()
}

fn with_gm<F>(z: &[Vec<f64>], gm: &GaussianMixtureHead, f: F) -> f64
where
    F: FnOnce(&mut Graph, Var, &GmVars) -> Var,
{
    eval(|g| {
        let zv = g.constant(Tensor::from_rows(z).unwrap());
        let vars = gm.bind(g, false);
        f(g, zv, &vars)
    })
}

#[test]
fn log_density_at_mean() {
    let v = log_gauss_diag(&[0.3, -1.0], &[0.3, -1.0], &[0.0, 0.0]);
    assert!((v + (2.0 * PI).ln()).abs() < TOL);
    let v = log_gauss_diag(&[1.3, 0.0], &[0.3, -1.0], &[0.0, 0.0]);
    assert!((v + (2.0 * PI).ln() + 1.0).abs() < TOL);
}

#[test]
fn log_gauss_rows_matches_scalar_form() {
    let z = vec![vec![0.5, -0.2], vec![1.0, 2.0]];
    let (mu, lv) = ([0.1, 0.4], [0.3, -0.6]);
    let mut g = Graph::inference();
    let zv = g.constant(Tensor::from_rows(&z).unwrap());
    let m = g.constant(Tensor::row(&mu));
    let l = g.constant(Tensor::row(&lv));
    let out = log_gauss_rows(&mut g, zv, m, l).unwrap();
    for (i, row) in z.iter().enumerate() {
        assert!((g.value(out).data()[i] - log_gauss_diag(row, &mu, &lv)).abs() < TOL);
    }
}

#[test]
fn posterior_one_dimensional_case() {
    let gm = head(&[0.0], &[4.0]);
    let p1 = gm.posterior(&[4.0], 1);
    assert!((p1 - 1.0 / (1.0 + (-8.0f64).exp())).abs() < TOL);
    let lp = with_gm(&[vec![4.0]], &gm, |g, z, v| {
        let lp = gm_log_posterior(g, z, v, 1).unwrap();
        g.sum(lp).unwrap()
    });
    assert!((lp.exp() - p1).abs() < TOL);
    assert!((gm.posterior(&[2.0], 0) - 0.5).abs() < TOL);
}

#[test]
fn classification_loss_values() {
    let gm = head(&[0.0], &[4.0]);
    let l = with_gm(&[vec![4.0]], &gm, |g, z, v| classification_loss(g, z, &[1], v).unwrap());
    assert!((l - (1.0 + (-8.0f64).exp()).ln()).abs() < TOL);
    assert!((l - 3.354e-4).abs() < 1e-7);
    let l = with_gm(&[vec![2.0], vec![2.0]], &gm, |g, z, v| classification_loss(g, z, &[0, 1], v).unwrap());
    assert!((l - LN_2).abs() < TOL);
}

#[test]
fn likelihood_loss_values() {
    let gm = head(&[1.0, -1.0], &[3.0, 3.0]);
    let ln2pi = (2.0 * PI).ln();
    let one = with_gm(&[vec![1.0, -1.0]], &gm, |g, z, v| {
        likelihood_loss(g, z, &[0], v, LikelihoodMode::Sum).unwrap()
    });
    assert!((one - ln2pi).abs() < TOL);
    let two = with_gm(&[vec![1.0, -1.0], vec![3.0, 3.0]], &gm, |g, z, v| {
        likelihood_loss(g, z, &[0, 1], v, LikelihoodMode::Sum).unwrap()
    });
    assert!((two - 2.0 * ln2pi).abs() < TOL);
    let mean = with_gm(&[vec![1.0, -1.0], vec![3.0, 3.0]], &gm, |g, z, v| {
        likelihood_loss(g, z, &[0, 1], v, LikelihoodMode::Mean).unwrap()
    });
    assert!((mean - ln2pi).abs() < TOL);
}

#[test]
fn likelihood_gradient_vanishes_at_mean() {
    let gm = head(&[1.0, -1.0], &[3.0, 3.0]);
    let mut g = Graph::new();
    let z = g.constant(Tensor::row(&[1.0, -1.0]));
    let v = gm.bind(&mut g, true);
    let l = likelihood_loss(&mut g, z, &[0], &v, LikelihoodMode::Sum).unwrap();
    g.backward(l).unwrap();
    assert!(g.grad(v.mean[0]).unwrap().iter().all(|x| x.abs() < 1e-15));
}

#[test]
fn gm_loss_composes() {
    let gm = head(&[1.0, -1.0], &[3.0, 3.0]);
    let z = [vec![1.0, -1.0], vec![3.0, 3.0]];
    let y = [0, 1];
    let cls = with_gm(&z, &gm, |g, z, v| classification_loss(g, z, &y, v).unwrap());
    let zero = with_gm(&z, &gm, |g, z, v| gm_loss(g, z, &y, v, 0.0, LikelihoodMode::Sum).unwrap());
    assert_eq!(zero, cls);
    let l = with_gm(&z, &gm, |g, z, v| gm_loss(g, z, &y, v, 0.1, LikelihoodMode::Sum).unwrap());
    assert!((l - (cls + 0.1 * 2.0 * (2.0 * PI).ln())).abs() < TOL);
}

fn bce(p: &[f64], y: &[u8]) -> f64 {
    eval(|g| {
        let pv = g.constant(Tensor::column(p));
        adversarial_loss(g, pv, y).unwrap()
    })
}

#[test]
fn adversarial_loss_values() {
    assert!((bce(&[0.5, 0.5, 0.5], &[0, 1, 1]) - LN_2).abs() < TOL);
    assert!((bce(&[0.25], &[1]) + 0.25f64.ln()).abs() < TOL);
    let perfect = bce(&[1.0, 0.0], &[1, 0]);
    assert!((perfect + (1.0 - BCE_EPS).ln()).abs() < TOL);
    assert!(perfect < 1e-6);
}

fn rec(x: &[Vec<f64>], x_rec: &[Vec<f64>]) -> f64 {
    eval(|g| {
        let a = g.constant(Tensor::from_rows(x).unwrap());
        let b = g.constant(Tensor::from_rows(x_rec).unwrap());
        reconstruction_loss(g, a, b).unwrap()
    })
}

#[test]
fn reconstruction_loss_values() {
    assert_eq!(rec(&[vec![0.2, 0.4]], &[vec![0.2, 0.4]]), 0.0);
    assert!((rec(&[vec![0.0, 0.0]], &[vec![3.0, 4.0]]) - 25.0).abs() < TOL);
    assert!((rec(&[vec![0.0, 0.0], vec![1.0, 1.0]], &[vec![3.0, 4.0], vec![1.0, 1.0]]) - 12.5).abs() < TOL);
}

#[test]
fn total_loss_composes() {
    let ln2pi = (2.0 * PI).ln();
    let total = |w: LossWeights, adv: f64| {
        eval(|g| {
            let r = g.constant(Tensor::scalar(25.0));
            let l = g.constant(Tensor::scalar(2.0 * ln2pi));
            let a = g.constant(Tensor::scalar(adv));
            total_autoencoder_loss(g, r, l, a, w).unwrap()
        })
    };
    assert_eq!(total(LossWeights { lkd: 0.0, adv: 0.0 }, LN_2), 25.0);
    let w = LossWeights { lkd: 0.1, adv: 0.05 };
    assert!((total(w, LN_2) - (25.0 + 0.1 * 2.0 * ln2pi - 0.05 * LN_2)).abs() < TOL);
    assert!(total(w, 1.0) < total(w, LN_2));
}

proptest! {
    #[test]
    fn posterior_normalizes(z in prop::collection::vec(-10.0..10.0f64, 3),
                            m in prop::collection::vec(-3.0..3.0f64, 6),
                            lv in prop::collection::vec(-1.0..1.0f64, 6)) {
        let gm = GaussianMixtureHead::from_parts(
            [m[..3].to_vec(), m[3..].to_vec()],
            [lv[..3].to_vec(), lv[3..].to_vec()],
        ).unwrap();
        prop_assert!((gm.posterior(&z, 0) + gm.posterior(&z, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classification_loss_translation_invariant(z in prop::collection::vec(-3.0..3.0f64, 4),
                                                 shift in prop::collection::vec(-5.0..5.0f64, 2)) {
        let gm = head(&[-1.0, 0.5], &[1.5, -0.5]);
        let moved = head(&[-1.0 + shift[0], 0.5 + shift[1]], &[1.5 + shift[0], -0.5 + shift[1]]);
        let rows = vec![vec![z[0], z[1]], vec![z[2], z[3]]];
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] + shift[0], r[1] + shift[1]]).collect();
        let y = [0, 1];
        let a = with_gm(&rows, &gm, |g, z, v| classification_loss(g, z, &y, v).unwrap());
        let b = with_gm(&shifted, &moved, |g, z, v| classification_loss(g, z, &y, v).unwrap());
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn likelihood_decreases_toward_mean(z in prop::collection::vec(-4.0..4.0f64, 2), t in 0.05..0.95f64) {
        let gm = head(&[0.5, -0.5], &[2.0, 2.0]);
        prop_assume!((z[0] - 0.5).hypot(z[1] + 0.5) > 1e-3);
        let closer = vec![z[0] + t * (0.5 - z[0]), z[1] + t * (-0.5 - z[1])];
        let far = with_gm(std::slice::from_ref(&z), &gm, |g, z, v| likelihood_loss(g, z, &[0], v, LikelihoodMode::Sum).unwrap());
        let near = with_gm(&[closer], &gm, |g, z, v| likelihood_loss(g, z, &[0], v, LikelihoodMode::Sum).unwrap());
        prop_assert!(near < far);
    }

    #[test]
    fn gm_loss_monotone_in_lambda(z in prop::collection::vec(-3.0..3.0f64, 4), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let gm = head(&[-1.0, 0.0], &[1.0, 0.0]);
        let rows = vec![vec![z[0], z[1]], vec![z[2], z[3]]];
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let f = |l: f64| with_gm(&rows, &gm, |g, z, v| gm_loss(g, z, &[0, 1], v, l, LikelihoodMode::Mean).unwrap());
        prop_assert!(f(lo) <= f(hi));
    }

    #[test]
    fn classification_loss_falls_toward_own_centroid(x in -3.0..3.0f64, t in 0.05..0.95f64) {
        let gm = head(&[0.0], &[4.0]);
        let moved = x + t * (4.0 - x);
        prop_assume!((x - 4.0).abs() > 1e-3);
        let before = with_gm(&[vec![x]], &gm, |g, z, v| classification_loss(g, z, &[1], v).unwrap());
        let after = with_gm(&[vec![moved]], &gm, |g, z, v| classification_loss(g, z, &[1], v).unwrap());
        prop_assert!(after < before);
    }
}
