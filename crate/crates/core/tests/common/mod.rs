#![allow(dead_code)]

use latent_cf::config::RunConfig;
use latent_cf::data::{synthetic_two_gaussians, Dataset, SyntheticSpec};
use latent_cf::numerics::Tensor;

/// Plain batch gradient descent on the logistic log-loss.
pub struct Logistic {
    pub w: Vec<f64>,
    pub b: f64,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl Logistic {
    pub fn fit(x: &Tensor, y: &[u8], epochs: usize, lr: f64) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        for _ in 0..epochs {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for r in 0..n {
                let row = x.row_slice(r);
                let p = sigmoid(row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b);
                let e = p - f64::from(y[r]);
                for (g, v) in gw.iter_mut().zip(row) {
                    *g += e * v;
                }
                gb += e;
            }
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= lr * g / n as f64;
            }
            b -= lr * gb / n as f64;
        }
        Self { w, b }
    }

    pub fn accuracy(&self, x: &Tensor, y: &[u8]) -> f64 {
        let hits = (0..x.rows())
            .filter(|&r| {
                let s: f64 = x.row_slice(r).iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>() + self.b;
                u8::from(s >= 0.0) == y[r]
            })
            .count();
        hits as f64 / x.rows() as f64
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Raw synthetic rows as a dataset, without preprocessing.
pub fn synthetic_raw(spec: &SyntheticSpec) -> Dataset {
    let table = synthetic_two_gaussians(spec).unwrap();
    let label = table.column_index("label").unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for row in &table.rows {
        let mut v = Vec::new();
        for (i, cell) in row.iter().enumerate() {
            let x = cell.as_number("c").unwrap();
            if i == label {
                labels.push(x as u8);
            } else {
                v.push(x);
            }
        }
        rows.push(v);
    }
    Dataset::new(Tensor::from_rows(&rows).unwrap(), labels).unwrap()
}

/// A small synthetic run that trains in well under a second.
pub fn small_config(seed: u64) -> RunConfig {
    let text = format!(
        r#"
seed = {seed}
repetitions = 2
max_queries = 20

[data]
kind = "synthetic"
n_per_class = 150
nuisance_dims = 3

[model]
latent_dim = 2
nuisance_dim = 4
encoder_hidden = [32, 16]
decoder_hidden = [16, 32]
adversary_hidden = [8]

[classifier]
hidden = [8]
epochs = 20
batch_size = 16
lr = 3e-3

[training]
epochs = 10
batch_size = 16
lr_adversary = 3e-3
lr_gm = 1e-3
lr_autoencoder = 3e-3
lambda_lkd = 0.5
lambda_adv = 0.1

[generation]
grid = 50
tol = 0.05
refine = true

[gdl]
max_iterations = 200
"#
    );
    RunConfig::parse(&text).unwrap()
}
