//! Central finite-difference checks of the reverse-mode gradients of every
//! graph op and every training loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::FeatureLayout;
use crate::error::Result;
use crate::losses::{
    adversarial_loss, classification_loss, gm_log_posterior, gm_loss, likelihood_loss, log_gauss_rows,
    reconstruction_loss, total_autoencoder_loss, weighted_bce, LikelihoodMode, LossWeights,
};
use crate::model::{GmVars, LEAKY_SLOPE};
use crate::numerics::{Graph, Tensor, Var};

/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;
const STEP: f64 = 1e-5;

/// Largest `|analytic − numeric| / max(|analytic|, |numeric|, REL_FLOOR)`
/// over every element of every input, for the scalar `f(inputs)`.
pub fn max_relative_error<F>(inputs: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::inference();
        let vars: Vec<Var> = xs.iter().map(|t| g.param(t)).collect();
        let out = f(&mut g, &vars)?;
        g.value(out).item()
    };
    let mut worst = 0.0f64;
    let mut xs = inputs.to_vec();
    for i in 0..xs.len() {
        for j in 0..xs[i].len() {
            let x0 = xs[i].data()[j];
            let h = STEP * x0.abs().max(1.0);
            xs[i].data_mut()[j] = x0 + h;
            let up = eval(&xs)?;
            xs[i].data_mut()[j] = x0 - h;
            let down = eval(&xs)?;
            xs[i].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[i][j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// A named family of random instances; `run(seed)` returns the worst
/// relative error of one instance.
#[derive(Clone, Copy)]
pub struct GradCase {
    pub name: &'static str,
    pub run: fn(u64) -> Result<f64>,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn shape(r: &mut ChaCha8Rng) -> (usize, usize) {
    (r.random_range(1..=4), r.random_range(1..=4))
}

fn uniform(r: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| r.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

/// Values in `[lo, hi]` at least `gap` away from every point in `kinks`.
fn away_from(r: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64, kinks: &[f64], gap: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| loop {
            let v = r.random_range(lo..hi);
            if kinks.iter().all(|k| (v - k).abs() > gap) {
                break v;
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

fn labels(r: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    (0..n).map(|_| r.random_range(0..2u8)).collect()
}

/// Scalarizes `out` as `Σ out ⊙ w` with fixed random weights.
fn weigh(g: &mut Graph, out: Var, w: &Tensor) -> Result<Var> {
    let w = g.constant(w.clone());
    let p = g.mul(out, w)?;
    g.sum(p)
}

fn unary(seed: u64, lo: f64, hi: f64, kinks: &[f64], op: fn(&mut Graph, Var) -> Result<Var>) -> Result<f64> {
    let mut r = rng(seed);
    let (n, c) = shape(&mut r);
    let x = away_from(&mut r, n, c, lo, hi, kinks, 0.05);
    let mut probe = Graph::inference();
    let xv = probe.param(&x);
    let out = op(&mut probe, xv)?;
    let (on, oc) = (probe.value(out).rows(), probe.value(out).cols());
    let w = uniform(&mut r, on, oc, -1.0, 1.0);
    max_relative_error(&[x], |g, v| {
        let out = op(g, v[0])?;
        weigh(g, out, &w)
    })
}

fn binary(seed: u64, op: fn(&mut Graph, Var, Var) -> Result<Var>) -> Result<f64> {
    let mut r = rng(seed);
    let (n, c) = shape(&mut r);
    let a = uniform(&mut r, n, c, -2.0, 2.0);
    let b_rows = if r.random_bool(0.5) { 1 } else { n };
    let b = uniform(&mut r, b_rows, c, -2.0, 2.0);
    let (a, b) = if r.random_bool(0.5) { (a, b) } else { (b, a) };
    let rows = a.rows().max(b.rows());
    let w = uniform(&mut r, rows, c, -1.0, 1.0);
    max_relative_error(&[a, b], |g, v| {
        let out = op(g, v[0], v[1])?;
        weigh(g, out, &w)
    })
}

struct GmInstance {
    z: Tensor,
    mean: [Tensor; 2],
    log_var: [Tensor; 2],
    labels: Vec<u8>,
}

fn gm_instance(r: &mut ChaCha8Rng) -> GmInstance {
    let (n, d) = shape(r);
    GmInstance {
        z: uniform(r, n, d, -2.0, 2.0),
        mean: [uniform(r, 1, d, -1.5, 1.5), uniform(r, 1, d, -1.5, 1.5)],
        log_var: [uniform(r, 1, d, -0.7, 0.7), uniform(r, 1, d, -0.7, 0.7)],
        labels: labels(r, n),
    }
}

fn gm_case(seed: u64, f: fn(&mut Graph, Var, &[u8], &GmVars) -> Result<Var>) -> Result<f64> {
    let mut r = rng(seed);
    let inst = gm_instance(&mut r);
    let inputs = [
        inst.z.clone(),
        inst.mean[0].clone(),
        inst.mean[1].clone(),
        inst.log_var[0].clone(),
        inst.log_var[1].clone(),
    ];
    max_relative_error(&inputs, |g, v| {
        let gm = GmVars {
            mean: [v[1], v[2]],
            log_var: [v[3], v[4]],
        };
        f(g, v[0], &inst.labels, &gm)
    })
}

fn column_probs(r: &mut ChaCha8Rng) -> (Tensor, Vec<u8>) {
    let n = r.random_range(1..=6);
    (uniform(r, n, 1, 0.05, 0.95), labels(r, n))
}

/// Every op and loss, each to be run on many seeds.
pub fn suite() -> Vec<GradCase> {
    vec![
        GradCase {
            name: "matmul",
            run: |s| {
                let mut r = rng(s);
                let (n, k) = shape(&mut r);
                let m = r.random_range(1..=4);
                let a = uniform(&mut r, n, k, -2.0, 2.0);
                let b = uniform(&mut r, k, m, -2.0, 2.0);
                let w = uniform(&mut r, n, m, -1.0, 1.0);
                max_relative_error(&[a, b], |g, v| {
                    let o = g.matmul(v[0], v[1])?;
                    weigh(g, o, &w)
                })
            },
        },
        GradCase {
            name: "add",
            run: |s| binary(s, |g, a, b| g.add(a, b)),
        },
        GradCase {
            name: "sub",
            run: |s| binary(s, |g, a, b| g.sub(a, b)),
        },
        GradCase {
            name: "mul",
            run: |s| binary(s, |g, a, b| g.mul(a, b)),
        },
        GradCase {
            name: "scale",
            run: |s| unary(s, -2.0, 2.0, &[], |g, x| g.scale(x, -1.7)),
        },
        GradCase {
            name: "add_scalar",
            run: |s| unary(s, -2.0, 2.0, &[], |g, x| g.add_scalar(x, 0.3)),
        },
        GradCase {
            name: "relu",
            run: |s| unary(s, -2.0, 2.0, &[0.0], |g, x| g.relu(x)),
        },
        GradCase {
            name: "leaky_relu",
            run: |s| unary(s, -2.0, 2.0, &[0.0], |g, x| g.leaky_relu(x, LEAKY_SLOPE)),
        },
        GradCase {
            name: "sigmoid",
            run: |s| unary(s, -4.0, 4.0, &[], |g, x| g.sigmoid(x)),
        },
        GradCase {
            name: "tanh",
            run: |s| unary(s, -3.0, 3.0, &[], |g, x| g.tanh(x)),
        },
        GradCase {
            name: "softmax",
            run: |s| unary(s, -3.0, 3.0, &[], |g, x| g.softmax(x, 0.5)),
        },
        GradCase {
            name: "log",
            run: |s| unary(s, 0.3, 3.0, &[], |g, x| g.log(x)),
        },
        GradCase {
            name: "exp",
            run: |s| unary(s, -2.0, 2.0, &[], |g, x| g.exp(x)),
        },
        GradCase {
            name: "square",
            run: |s| unary(s, -2.0, 2.0, &[], |g, x| g.square(x)),
        },
        GradCase {
            name: "clamp",
            run: |s| unary(s, -1.0, 1.0, &[-0.5, 0.5], |g, x| g.clamp(x, -0.5, 0.5)),
        },
        GradCase {
            name: "sum",
            run: |s| unary(s, -2.0, 2.0, &[], |g, x| g.sum(x)),
        },
        GradCase {
            name: "mean",
            run: |s| unary(s, -2.0, 2.0, &[], |g, x| g.mean(x)),
        },
        GradCase {
            name: "sum_rows",
            run: |s| unary(s, -2.0, 2.0, &[], |g, x| g.sum_rows(x)),
        },
        GradCase {
            name: "log_sum_exp_rows",
            run: |s| unary(s, -3.0, 3.0, &[], |g, x| g.log_sum_exp_rows(x)),
        },
        GradCase {
            name: "concat",
            run: |s| {
                let mut r = rng(s);
                let (n, c) = shape(&mut r);
                let c2 = r.random_range(1..=3);
                let a = uniform(&mut r, n, c, -2.0, 2.0);
                let b = uniform(&mut r, n, c2, -2.0, 2.0);
                let w = uniform(&mut r, n, c + c2, -1.0, 1.0);
                max_relative_error(&[a, b], |g, v| {
                    let o = g.concat(v[0], v[1])?;
                    weigh(g, o, &w)
                })
            },
        },
        GradCase {
            name: "slice",
            run: |s| {
                let mut r = rng(s);
                let n = r.random_range(1..=4);
                let c = r.random_range(2..=5);
                let start = r.random_range(0..c - 1);
                let end = r.random_range(start + 1..=c);
                let x = uniform(&mut r, n, c, -2.0, 2.0);
                let w = uniform(&mut r, n, end - start, -1.0, 1.0);
                max_relative_error(&[x], |g, v| {
                    let o = g.slice(v[0], start, end)?;
                    weigh(g, o, &w)
                })
            },
        },
        GradCase {
            name: "softmax_blocks",
            run: |s| {
                let mut r = rng(s);
                let layout = FeatureLayout {
                    continuous: 2,
                    categorical: vec![2, 3],
                };
                let n = r.random_range(1..=4);
                let x = uniform(&mut r, n, layout.width(), -2.0, 2.0);
                let w = uniform(&mut r, n, layout.width(), -1.0, 1.0);
                max_relative_error(&[x], |g, v| {
                    let o = layout.softmax_blocks(g, v[0], layout.continuous, 0.5)?;
                    weigh(g, o, &w)
                })
            },
        },
        GradCase {
            name: "log_gauss_rows",
            run: |s| {
                let mut r = rng(s);
                let inst = gm_instance(&mut r);
                let w = uniform(&mut r, inst.z.rows(), 1, -1.0, 1.0);
                max_relative_error(&[inst.z, inst.mean[0].clone(), inst.log_var[0].clone()], |g, v| {
                    let o = log_gauss_rows(g, v[0], v[1], v[2])?;
                    weigh(g, o, &w)
                })
            },
        },
        GradCase {
            name: "gm_log_posterior",
            run: |s| {
                let class = (s % 2) as usize;
                let mut r = rng(s);
                let inst = gm_instance(&mut r);
                let w = uniform(&mut r, inst.z.rows(), 1, -1.0, 1.0);
                let inputs = [
                    inst.z,
                    inst.mean[0].clone(),
                    inst.mean[1].clone(),
                    inst.log_var[0].clone(),
                    inst.log_var[1].clone(),
                ];
                max_relative_error(&inputs, |g, v| {
                    let gm = GmVars {
                        mean: [v[1], v[2]],
                        log_var: [v[3], v[4]],
                    };
                    let o = gm_log_posterior(g, v[0], &gm, class)?;
                    weigh(g, o, &w)
                })
            },
        },
        GradCase {
            name: "classification_loss",
            run: |s| gm_case(s, classification_loss),
        },
        GradCase {
            name: "likelihood_loss_mean",
            run: |s| gm_case(s, |g, z, y, gm| likelihood_loss(g, z, y, gm, LikelihoodMode::Mean)),
        },
        GradCase {
            name: "likelihood_loss_sum",
            run: |s| gm_case(s, |g, z, y, gm| likelihood_loss(g, z, y, gm, LikelihoodMode::Sum)),
        },
        GradCase {
            name: "gm_loss",
            run: |s| gm_case(s, |g, z, y, gm| gm_loss(g, z, y, gm, 0.5, LikelihoodMode::Mean)),
        },
        GradCase {
            name: "weighted_bce",
            run: |s| {
                let mut r = rng(s);
                let (p, y) = column_probs(&mut r);
                let w = (r.random_range(0.5..2.0), r.random_range(0.5..2.0));
                max_relative_error(&[p], |g, v| weighted_bce(g, v[0], &y, w))
            },
        },
        GradCase {
            name: "adversarial_loss",
            run: |s| {
                let mut r = rng(s);
                let (p, y) = column_probs(&mut r);
                max_relative_error(&[p], |g, v| adversarial_loss(g, v[0], &y))
            },
        },
        GradCase {
            name: "reconstruction_loss",
            run: |s| {
                let mut r = rng(s);
                let (n, c) = shape(&mut r);
                let x = uniform(&mut r, n, c, 0.0, 1.0);
                let x_rec = uniform(&mut r, n, c, -0.5, 1.5);
                max_relative_error(&[x, x_rec], |g, v| reconstruction_loss(g, v[0], v[1]))
            },
        },
        GradCase {
            name: "total_autoencoder_loss",
            run: |s| {
                let mut r = rng(s);
                let inputs = [
                    uniform(&mut r, 1, 1, 0.0, 2.0),
                    uniform(&mut r, 1, 1, -2.0, 2.0),
                    uniform(&mut r, 1, 1, 0.0, 1.0),
                ];
                let weights = LossWeights {
                    lkd: r.random_range(0.0..1.0),
                    adv: r.random_range(0.0..0.2),
                };
                max_relative_error(&inputs, |g, v| total_autoencoder_loss(g, v[0], v[1], v[2], weights))
            },
        },
        GradCase {
            name: "autoencoder_objective",
            run: |s| {
                let mut r = rng(s);
                let inst = gm_instance(&mut r);
                let n = inst.z.rows();
                let c = r.random_range(1..=3);
                let x = uniform(&mut r, n, c, 0.0, 1.0);
                let x_rec = uniform(&mut r, n, c, -0.5, 1.5);
                let p = uniform(&mut r, n, 1, 0.05, 0.95);
                let weights = LossWeights { lkd: 0.5, adv: 0.05 };
                let inputs = [inst.z, x_rec, p, inst.mean[0].clone(), inst.mean[1].clone()];
                max_relative_error(&inputs, |g, v| {
                    let gm = GmVars {
                        mean: [v[3], v[4]],
                        log_var: [g.constant(inst.log_var[0].clone()), g.constant(inst.log_var[1].clone())],
                    };
                    let xc = g.constant(x.clone());
                    let rec = reconstruction_loss(g, xc, v[1])?;
                    let lkd = likelihood_loss(g, v[0], &inst.labels, &gm, LikelihoodMode::Mean)?;
                    let adv = adversarial_loss(g, v[2], &inst.labels)?;
                    total_autoencoder_loss(g, rec, lkd, adv, weights)
                })
            },
        },
    ]
}
