//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation of one forward pass as a node holding
//! its cached output and references to its parents. Nodes are appended in
//! evaluation order, so parents always precede children and the backward
//! sweep is a single reverse pass over the tape.
//!
//! All values are matrices `(rows, cols)`. Binary elementwise operations
//! accept equal shapes, or a `(1, cols)` operand broadcast over the rows of
//! the other one.
//!
//! ```
//! use latent_cf::numerics::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(&Tensor::row(&[1.0, 2.0]));
//! let sq = g.square(x).unwrap();
//! let loss = g.sum(sq).unwrap();
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
//! ```

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var, f64),
    Log(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    LogSumExpRows(Var),
    Concat(Var, Var),
    Slice(Var, usize, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// The operation tape. Rebuilt for every forward pass.
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    recording: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn as_matrix(t: &Tensor) -> Tensor {
    if t.shape().len() == 2 {
        let mut m = t.clone();
        m.clear_grad();
        m
    } else {
        Tensor::matrix(t.rows(), t.cols(), t.data().to_vec()).expect("same element count")
    }
}

/// Sums a `(rows, cols)` gradient down to `(1, cols)` when the operand was broadcast.
fn reduce_to(g: &[f64], out: (usize, usize), target: (usize, usize)) -> Vec<f64> {
    if out == target {
        return g.to_vec();
    }
    let mut acc = vec![0.0; target.1];
    for r in 0..out.0 {
        for (c, a) in acc.iter_mut().enumerate() {
            *a += g[r * out.1 + c];
        }
    }
    acc
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(row: &[f64], temperature: f64, out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, v) in out.iter_mut().zip(row) {
        *o = ((v - max) / temperature).exp();
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            recording: true,
        }
    }

    /// A graph that only evaluates. Nodes keep no parent links and
    /// [`Graph::backward`] is rejected.
    pub fn inference() -> Self {
        Self {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf whose gradient is wanted.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.leaf(as_matrix(t), self.recording)
    }

    /// Leaf treated as a constant; gradients still flow through any op that
    /// consumes it towards other inputs.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let t = if t.shape().len() == 2 { t } else { as_matrix(&t) };
        self.leaf(t, false)
    }

    fn leaf(&mut self, mut value: Tensor, needs_grad: bool) -> Var {
        value.clear_grad();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass with respect to `v`, if `v` was
    /// reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var], name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let needs_grad = self.recording && parents.iter().any(|p| self.nodes[p.0].needs_grad);
        let op = if self.recording { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn broadcast(&self, name: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let da = dims(self.value(a));
        let db = dims(self.value(b));
        if da == db || (da.1 == db.1 && db.0 == 1) {
            Ok(da)
        } else if da.1 == db.1 && da.0 == 1 {
            Ok(db)
        } else {
            Err(Error::dim(name, format!("{da:?} vs {db:?}")))
        }
    }

    fn zip_with(&mut self, name: &'static str, op: Op, a: Var, b: Var, f: fn(f64, f64) -> f64) -> Result<Var> {
        let (r, c) = self.broadcast(name, a, b)?;
        let ta = self.value(a);
        let tb = self.value(b);
        let (ra, rb) = (ta.rows(), tb.rows());
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            let arow = ta.row_slice(if ra == 1 { 0 } else { i });
            let brow = tb.row_slice(if rb == 1 { 0 } else { i });
            out.extend(arow.iter().zip(brow).map(|(x, y)| f(*x, *y)));
        }
        self.push(Tensor::matrix(r, c, out)?, op, &[a, b], name)
    }

    fn map(&mut self, name: &'static str, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::matrix(t.rows(), t.cols(), data)?;
        self.push(out, op, &[a], name)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = dims(self.value(a));
        let (k2, m) = dims(self.value(b));
        if k != k2 {
            return Err(Error::dim("matmul", format!("({n},{k}) x ({k2},{m})")));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), n, k, m);
        self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b), &[a, b], "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", Op::Sub(a, b), a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", Op::Mul(a, b), a, b, |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        self.map("scale", Op::Scale(a, k), a, |x| x * k)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Result<Var> {
        self.map("add_scalar", Op::AddScalar(a, k), a, |x| x + k)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map("relu", Op::Relu(a), a, |x| x.max(0.0))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.map("leaky_relu", Op::LeakyRelu(a, slope), a, |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", Op::Sigmoid(a), a, sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", Op::Tanh(a), a, f64::tanh)
    }

    /// Row-wise `softmax(x / temperature)`.
    pub fn softmax(&mut self, a: Var, temperature: f64) -> Result<Var> {
        if temperature <= 0.0 || !temperature.is_finite() {
            return Err(Error::Contract(format!("softmax temperature {temperature}")));
        }
        let t = self.value(a);
        let (r, c) = dims(t);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            softmax_row(t.row_slice(i), temperature, &mut out[i * c..(i + 1) * c]);
        }
        self.push(Tensor::matrix(r, c, out)?, Op::Softmax(a, temperature), &[a], "softmax")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.map("log", Op::Log(a), a, f64::ln)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map("exp", Op::Exp(a), a, f64::exp)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.map("square", Op::Square(a), a, |x| x * x)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.map("clamp", Op::Clamp(a, lo, hi), a, |x| x.clamp(lo, hi))
    }

    /// Sum of all elements, as a `(1, 1)` scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a], "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a], "mean")
    }

    /// `(n, d) -> (n, 1)` row sums.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let out = (0..t.rows()).map(|i| t.row_slice(i).iter().sum()).collect::<Vec<f64>>();
        self.push(Tensor::column(&out), Op::SumRows(a), &[a], "sum_rows")
    }

    /// `(n, d) -> (n, 1)` numerically stable `log Σ_j exp(x_ij)`.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let out = (0..t.rows())
            .map(|i| {
                let row = t.row_slice(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
            })
            .collect::<Vec<f64>>();
        self.push(Tensor::column(&out), Op::LogSumExpRows(a), &[a], "log_sum_exp")
    }

    /// Column-wise concatenation of two matrices with equal row counts.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = dims(self.value(a));
        let (rb, cb) = dims(self.value(b));
        if ra != rb {
            return Err(Error::dim("concat", format!("({ra},{ca}) | ({rb},{cb})")));
        }
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(self.value(a).row_slice(i));
            out.extend_from_slice(self.value(b).row_slice(i));
        }
        self.push(Tensor::matrix(ra, ca + cb, out)?, Op::Concat(a, b), &[a, b], "concat")
    }

    /// Columns `start..end`.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = dims(self.value(a));
        if start >= end || end > c {
            return Err(Error::dim("slice", format!("{start}..{end} of {c} columns")));
        }
        let t = self.value(a);
        let mut out = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            out.extend_from_slice(&t.row_slice(i)[start..end]);
        }
        self.push(Tensor::matrix(r, end - start, out)?, Op::Slice(a, start, end), &[a], "slice")
    }

    /// Reverse sweep from a scalar `loss`. Gradients of earlier passes are
    /// discarded; contributions from fan-out are summed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.recording {
            return Err(Error::Contract("backward on an inference graph".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if self.nodes[i].needs_grad {
                self.propagate(i, &g);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn send(&mut self, to: Var, g: Vec<f64>) {
        if !self.nodes[to.0].needs_grad {
            return;
        }
        match &mut self.grads[to.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let out_dims = dims(&self.nodes[i].value);
        match self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = dims(self.value(a));
                let m = out_dims.1;
                if self.wants(a) {
                    // g (n,m) @ b^T (m,k)
                    let bv = self.value(b).data();
                    let mut ga = vec![0.0; n * k];
                    for r in 0..n {
                        for p in 0..k {
                            let brow = &bv[p * m..(p + 1) * m];
                            ga[r * k + p] = g[r * m..(r + 1) * m].iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    self.send(a, ga);
                }
                if self.wants(b) {
                    // a^T (k,n) @ g (n,m)
                    let av = self.value(a).data();
                    let mut gb = vec![0.0; k * m];
                    for r in 0..n {
                        let grow = &g[r * m..(r + 1) * m];
                        for p in 0..k {
                            let x = av[r * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, gv) in gb[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *o += x * gv;
                            }
                        }
                    }
                    self.send(b, gb);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(self.nodes[i].op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.wants(a) {
                    let ga = reduce_to(g, out_dims, dims(self.value(a)));
                    self.send(a, ga);
                }
                if self.wants(b) {
                    let mut gb = reduce_to(g, out_dims, dims(self.value(b)));
                    if sign < 0.0 {
                        gb.iter_mut().for_each(|v| *v = -*v);
                    }
                    self.send(b, gb);
                }
            }
            Op::Mul(a, b) => {
                let (r, c) = out_dims;
                let (ta, tb) = (self.value(a), self.value(b));
                let (ra, rb) = (ta.rows(), tb.rows());
                let mut full_a = vec![0.0; r * c];
                let mut full_b = vec![0.0; r * c];
                for row in 0..r {
                    let arow = ta.row_slice(if ra == 1 { 0 } else { row });
                    let brow = tb.row_slice(if rb == 1 { 0 } else { row });
                    for col in 0..c {
                        let gv = g[row * c + col];
                        full_a[row * c + col] = gv * brow[col];
                        full_b[row * c + col] = gv * arow[col];
                    }
                }
                if self.wants(a) {
                    let ga = reduce_to(&full_a, out_dims, dims(self.value(a)));
                    self.send(a, ga);
                }
                if self.wants(b) {
                    let gb = reduce_to(&full_b, out_dims, dims(self.value(b)));
                    self.send(b, gb);
                }
            }
            Op::Scale(a, k) => self.send(a, g.iter().map(|v| v * k).collect()),
            Op::AddScalar(a, _) => self.send(a, g.to_vec()),
            Op::Relu(a) => {
                let x = self.value(a).data();
                let ga = g.iter().zip(x).map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 }).collect();
                self.send(a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let x = self.value(a).data();
                let ga = g.iter().zip(x).map(|(gv, xv)| if *xv > 0.0 { *gv } else { slope * gv }).collect();
                self.send(a, ga);
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[i].value.data();
                let ga = g.iter().zip(y).map(|(gv, s)| gv * s * (1.0 - s)).collect();
                self.send(a, ga);
            }
            Op::Tanh(a) => {
                let y = self.nodes[i].value.data();
                let ga = g.iter().zip(y).map(|(gv, t)| gv * (1.0 - t * t)).collect();
                self.send(a, ga);
            }
            Op::Softmax(a, temperature) => {
                let (r, c) = out_dims;
                let y = self.nodes[i].value.data();
                let mut ga = vec![0.0; r * c];
                for row in 0..r {
                    let ys = &y[row * c..(row + 1) * c];
                    let gs = &g[row * c..(row + 1) * c];
                    let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                    for col in 0..c {
                        ga[row * c + col] = ys[col] * (gs[col] - dot) / temperature;
                    }
                }
                self.send(a, ga);
            }
            Op::Log(a) => {
                let x = self.value(a).data();
                let ga = g.iter().zip(x).map(|(gv, xv)| gv / xv).collect();
                self.send(a, ga);
            }
            Op::Exp(a) => {
                let y = self.nodes[i].value.data();
                let ga = g.iter().zip(y).map(|(gv, yv)| gv * yv).collect();
                self.send(a, ga);
            }
            Op::Square(a) => {
                let x = self.value(a).data();
                let ga = g.iter().zip(x).map(|(gv, xv)| 2.0 * gv * xv).collect();
                self.send(a, ga);
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(a).data();
                let ga = g
                    .iter()
                    .zip(x)
                    .map(|(gv, xv)| if *xv >= lo && *xv <= hi { *gv } else { 0.0 })
                    .collect();
                self.send(a, ga);
            }
            Op::Sum(a) => {
                let n = self.value(a).len();
                self.send(a, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(a).len();
                self.send(a, vec![g[0] / n as f64; n]);
            }
            Op::SumRows(a) => {
                let (r, c) = dims(self.value(a));
                let ga = (0..r * c).map(|k| g[k / c]).collect();
                self.send(a, ga);
            }
            Op::LogSumExpRows(a) => {
                let t = self.value(a);
                let (r, c) = dims(t);
                let y = self.nodes[i].value.data();
                let mut ga = vec![0.0; r * c];
                for row in 0..r {
                    for col in 0..c {
                        ga[row * c + col] = g[row] * (t.get(row, col) - y[row]).exp();
                    }
                }
                self.send(a, ga);
            }
            Op::Concat(a, b) => {
                let (r, c) = out_dims;
                let ca = self.value(a).cols();
                let cb = c - ca;
                if self.wants(a) {
                    let ga = (0..r).flat_map(|row| g[row * c..row * c + ca].to_vec()).collect();
                    self.send(a, ga);
                }
                if self.wants(b) {
                    let gb = (0..r).flat_map(|row| g[row * c + ca..row * c + ca + cb].to_vec()).collect();
                    self.send(b, gb);
                }
            }
            Op::Slice(a, start, end) => {
                let (r, c) = dims(self.value(a));
                let w = end - start;
                let mut ga = vec![0.0; r * c];
                for row in 0..r {
                    ga[row * c + start..row * c + end].copy_from_slice(&g[row * w..(row + 1) * w]);
                }
                self.send(a, ga);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_forward() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(&[-1.0, 0.0, 2.0]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = Graph::new();
        let x = g.param(&Tensor::scalar(0.0));
        let y = g.sigmoid(x).unwrap();
        assert_eq!(g.value(y).item().unwrap(), 0.5);
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.25]);
    }

    #[test]
    fn softmax_equal_logits() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(&[1.0, 1.0]));
        let y = g.softmax(x, 0.5).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn sum_of_squares_grad() {
        let mut g = Graph::new();
        let x = g.param(&Tensor::row(&[1.0, 2.0]));
        let sq = g.square(x).unwrap();
        let l = g.sum(sq).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn fan_out_sums_both_paths() {
        // l = x*x + 3x  =>  dl/dx = 2x + 3
        let mut g = Graph::new();
        let x = g.param(&Tensor::scalar(1.5));
        let sq = g.mul(x, x).unwrap();
        let lin = g.scale(x, 3.0).unwrap();
        let l = g.add(sq, lin).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(&Tensor::row(&[1.0, 2.0]));
        let y = g.square(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(2, 3));
        let b = g.constant(Tensor::zeros(2, 3));
        assert!(matches!(g.matmul(a, b), Err(Error::Dimension { .. })));
        let c = g.constant(Tensor::zeros(3, 2));
        assert!(matches!(g.add(a, c), Err(Error::Dimension { .. })));
        let row = g.constant(Tensor::zeros(1, 3));
        assert!(g.add(a, row).is_ok());
    }

    #[test]
    fn log_of_zero_is_numeric_error() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(&[0.0]));
        assert!(matches!(g.log(x), Err(Error::NonFinite { op: "log" })));
    }

    #[test]
    fn inference_graph_refuses_backward() {
        let mut g = Graph::inference();
        let x = g.param(&Tensor::scalar(1.0));
        let y = g.square(x).unwrap();
        assert_eq!(g.value(y).item().unwrap(), 1.0);
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn broadcast_row_grad_is_summed() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(3, 2, vec![1.0; 6]).unwrap());
        let b = g.param(&Tensor::row(&[0.0, 0.0]));
        let y = g.add(x, b).unwrap();
        let l = g.sum(y).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(b).unwrap(), &[3.0, 3.0]);
    }
}
