//! Counterfactual search: interpolation toward the target centroid, and the
//! gradient-descent-in-latent-space baseline.

use std::fmt;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{bind, DisentangledAutoencoder, FrozenClassifier};
use crate::numerics::{Graph, Tensor, Var};

/// Scores samples; must be differentiable for the gradient baseline.
pub trait Scorer {
    fn score_rows(&self, x: &Tensor) -> Result<Vec<f64>>;
    fn score_graph(&self, g: &mut Graph, x: Var) -> Result<Var>;
}

impl Scorer for FrozenClassifier {
    fn score_rows(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.score(x)
    }

    fn score_graph(&self, g: &mut Graph, x: Var) -> Result<Var> {
        self.forward(g, x)
    }
}

/// Encoder/decoder pair seen by the generators.
pub trait LatentCodec {
    /// Returns `(z, z_u)` for one sample.
    fn encode_one(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
    /// Decodes one `z` row per `z` entry, all sharing `z_u`, and maps the
    /// outputs onto the data domain.
    fn decode_projected(&self, z: &Tensor, z_u: &[f64]) -> Result<Tensor>;
    /// Differentiable decode of a concatenated `(z, z_u)` latent, with
    /// categorical blocks softened at `temperature`.
    fn decode_graph(&self, g: &mut Graph, latent: Var, temperature: f64) -> Result<Var>;
    /// The class-1 centroid in `z` space.
    fn target_centroid(&self) -> Vec<f64>;
}

impl LatentCodec for DisentangledAutoencoder {
    fn encode_one(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (z, z_u) = self.encode(&Tensor::row(x))?;
        Ok((z.into_data(), z_u.into_data()))
    }

    fn decode_projected(&self, z: &Tensor, z_u: &[f64]) -> Result<Tensor> {
        let rows = z.rows();
        let u = Tensor::matrix(rows, z_u.len(), z_u.repeat(rows))?;
        let out = self.decode(z, &u)?;
        let layout = self.layout();
        let data: Vec<f64> = (0..rows).flat_map(|r| layout.project(out.row_slice(r))).collect();
        Tensor::matrix(rows, out.cols(), data)
    }

    fn decode_graph(&self, g: &mut Graph, latent: Var, temperature: f64) -> Result<Var> {
        let bound = bind(g, self.decoder(), false);
        self.decoder().forward_tempered(g, latent, &bound, temperature)
    }

    fn target_centroid(&self) -> Vec<f64> {
        self.gm().mean(1).to_vec()
    }
}

/// Which qualifying grid point to return.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Selection {
    #[default]
    Smallest,
    Largest,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerationConfig {
    /// Number of grid points `S`; the grid is `α = k/S`, `k = 1..=S`.
    pub grid: usize,
    pub boundary: f64,
    pub tol: f64,
    pub refine: bool,
    pub bisection_cap: usize,
    pub selection: Selection,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            grid: 100,
            boundary: 0.5,
            tol: 0.1,
            refine: false,
            bisection_cap: 20,
            selection: Selection::Smallest,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid == 0 {
            return Err(Error::Config("grid must have at least one point".into()));
        }
        validate_boundary(self.boundary, self.tol)
    }

    pub fn alphas(&self) -> Vec<f64> {
        (1..=self.grid).map(|k| k as f64 / self.grid as f64).collect()
    }

    /// `f ≥ T` and `|f − T| < tol`.
    pub fn qualifies(&self, score: f64) -> bool {
        score >= self.boundary && (score - self.boundary).abs() < self.tol
    }
}

fn validate_boundary(boundary: f64, tol: f64) -> Result<()> {
    if !(boundary > 0.0 && boundary < 1.0) {
        return Err(Error::Config(format!("boundary must lie in (0, 1), got {boundary}")));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureReason {
    /// The score never reached the boundary.
    NoBoundaryCrossing,
    /// The score crossed the boundary but no evaluated point was within tolerance.
    OutsideTolerance,
    IterationCap,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureReason::NoBoundaryCrossing => "no boundary crossing",
            FailureReason::OutsideTolerance => "crossing outside tolerance",
            FailureReason::IterationCap => "iteration cap reached",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CounterfactualResult {
    pub query: Vec<f64>,
    pub counterfactual: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    /// Score of the returned counterfactual, or of the last candidate on failure.
    pub score: f64,
    pub failure: Option<FailureReason>,
    pub seconds: f64,
    /// Gradient steps taken (gradient baseline only).
    pub steps: usize,
    /// Final `(z, z_u)` latent (gradient baseline only).
    pub latent: Option<Vec<f64>>,
}

impl CounterfactualResult {
    pub fn success(&self) -> bool {
        self.counterfactual.is_some()
    }
}

/// Scores along the interpolation path.
#[derive(Clone, Debug, PartialEq)]
pub struct InterpolationTrace {
    /// Score of the query's own reconstruction (`α = 0`).
    pub start: f64,
    /// `(α, score)` for every grid point.
    pub points: Vec<(f64, f64)>,
}

impl InterpolationTrace {
    /// `(0, start)` followed by the grid points.
    pub fn rows(&self) -> Vec<(f64, f64)> {
        std::iter::once((0.0, self.start)).chain(self.points.iter().copied()).collect()
    }
}

/// `(1 − α) z_q + α μ_1`.
pub fn interpolate(z_q: &[f64], target: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if z_q.len() != target.len() {
        return Err(Error::dim("interpolate", format!("{} vs {}", z_q.len(), target.len())));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Contract(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(z_q.iter().zip(target).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect())
}

fn ensure_base<S: Scorer>(f: &S, x_q: &[f64], boundary: f64) -> Result<()> {
    let s = f.score_rows(&Tensor::row(x_q))?[0];
    if s >= boundary {
        return Err(Error::QueryAlreadyTarget { score: s, boundary });
    }
    Ok(())
}

struct Path<'a, C, S> {
    codec: &'a C,
    f: &'a S,
    z_q: Vec<f64>,
    z_u: Vec<f64>,
    target: Vec<f64>,
}

impl<C: LatentCodec, S: Scorer> Path<'_, C, S> {
    /// Projected samples and their scores at each `α`.
    fn eval(&self, alphas: &[f64]) -> Result<(Tensor, Vec<f64>)> {
        let d = self.z_q.len();
        let mut z = Vec::with_capacity(alphas.len() * d);
        for &a in alphas {
            z.extend(interpolate(&self.z_q, &self.target, a)?);
        }
        let x = self.codec.decode_projected(&Tensor::matrix(alphas.len(), d, z)?, &self.z_u)?;
        let s = self.f.score_rows(&x)?;
        Ok((x, s))
    }
}

fn open_path<'a, C: LatentCodec, S: Scorer>(codec: &'a C, f: &'a S, x_q: &[f64]) -> Result<Path<'a, C, S>> {
    let (z_q, z_u) = codec.encode_one(x_q)?;
    let target = codec.target_centroid();
    Ok(Path {
        codec,
        f,
        z_q,
        z_u,
        target,
    })
}

/// Full score curve along the interpolation path.
pub fn trace_path<C: LatentCodec, S: Scorer>(
    codec: &C,
    f: &S,
    x_q: &[f64],
    cfg: &GenerationConfig,
) -> Result<InterpolationTrace> {
    cfg.validate()?;
    let path = open_path(codec, f, x_q)?;
    let mut alphas = vec![0.0];
    alphas.extend(cfg.alphas());
    let (_, scores) = path.eval(&alphas)?;
    Ok(InterpolationTrace {
        start: scores[0],
        points: alphas[1..].iter().copied().zip(scores[1..].iter().copied()).collect(),
    })
}

/// Interpolation search. `z_u` of the query is held fixed along the path.
/// Returns the result and the trace of the grid scan.
pub fn generate<C: LatentCodec, S: Scorer>(
    codec: &C,
    f: &S,
    x_q: &[f64],
    cfg: &GenerationConfig,
) -> Result<(CounterfactualResult, InterpolationTrace)> {
    cfg.validate()?;
    ensure_base(f, x_q, cfg.boundary)?;
    let start = Instant::now();
    let path = open_path(codec, f, x_q)?;
    let mut alphas = vec![0.0];
    alphas.extend(cfg.alphas());
    let (xs, scores) = path.eval(&alphas)?;

    let mut qualifying = (1..alphas.len()).filter(|&k| cfg.qualifies(scores[k]));
    let pick = match cfg.selection {
        Selection::Smallest => qualifying.next(),
        Selection::Largest => qualifying.next_back(),
    };
    let mut found = pick.map(|k| (alphas[k], xs.row_slice(k).to_vec(), scores[k]));

    if found.is_none() && cfg.refine {
        let crossing = (1..alphas.len()).find(|&k| scores[k - 1] < cfg.boundary && scores[k] >= cfg.boundary);
        if let Some(k) = crossing {
            let (mut lo, mut hi) = (alphas[k - 1], alphas[k]);
            for _ in 0..cfg.bisection_cap {
                let mid = 0.5 * (lo + hi);
                let (x, s) = path.eval(&[mid])?;
                if cfg.qualifies(s[0]) {
                    found = Some((mid, x.row_slice(0).to_vec(), s[0]));
                    break;
                }
                if s[0] >= cfg.boundary {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
    }
    let seconds = start.elapsed().as_secs_f64();

    let trace = InterpolationTrace {
        start: scores[0],
        points: alphas[1..].iter().copied().zip(scores[1..].iter().copied()).collect(),
    };
    let result = match found {
        Some((alpha, x, score)) => CounterfactualResult {
            query: x_q.to_vec(),
            counterfactual: Some(x),
            alpha: Some(alpha),
            score,
            failure: None,
            seconds,
            steps: 0,
            latent: None,
        },
        None => {
            let crossed = scores[1..].iter().any(|&s| s >= cfg.boundary);
            CounterfactualResult {
                query: x_q.to_vec(),
                counterfactual: None,
                alpha: None,
                score: *scores.last().expect("non-empty grid"),
                failure: Some(if crossed {
                    FailureReason::OutsideTolerance
                } else {
                    FailureReason::NoBoundaryCrossing
                }),
                seconds,
                steps: 0,
                latent: None,
            }
        }
    };
    Ok((result, trace))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GdlConfig {
    pub lr: f64,
    pub max_iterations: usize,
    pub boundary: f64,
    pub tol: f64,
    /// Softmax temperature of the categorical blocks on the gradient path.
    pub temperature: f64,
}

impl Default for GdlConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            max_iterations: 1000,
            boundary: 0.5,
            tol: 0.1,
            temperature: 0.5,
        }
    }
}

impl GdlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("gdl lr must be positive, got {}", self.lr)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("gdl temperature must be positive".into()));
        }
        validate_boundary(self.boundary, self.tol)
    }

    /// `|f − T| < tol` and `f > T`.
    pub fn succeeds(&self, score: f64) -> bool {
        score > self.boundary && (score - self.boundary).abs() < self.tol
    }
}

/// Gradient descent of `(T − f(dec(z)))²` over the concatenated latent
/// `(z, z_u)`, starting from the query's encoding.
pub fn generate_gdl<C: LatentCodec, S: Scorer>(
    codec: &C,
    f: &S,
    x_q: &[f64],
    cfg: &GdlConfig,
) -> Result<CounterfactualResult> {
    cfg.validate()?;
    ensure_base(f, x_q, cfg.boundary)?;
    let start = Instant::now();
    let (z, z_u) = codec.encode_one(x_q)?;
    let d_z = z.len();
    let mut latent = [z, z_u].concat();
    let mut steps = 0;
    let mut last_score;
    loop {
        let x = codec.decode_projected(&Tensor::row(&latent[..d_z]), &latent[d_z..])?;
        last_score = f.score_rows(&x)?[0];
        if cfg.succeeds(last_score) {
            return Ok(CounterfactualResult {
                query: x_q.to_vec(),
                counterfactual: Some(x.row_slice(0).to_vec()),
                alpha: None,
                score: last_score,
                failure: None,
                seconds: start.elapsed().as_secs_f64(),
                steps,
                latent: Some(latent),
            });
        }
        if steps == cfg.max_iterations {
            break;
        }
        let mut g = Graph::new();
        let lv = g.param(&Tensor::row(&latent));
        let x_soft = codec.decode_graph(&mut g, lv, cfg.temperature)?;
        let p = f.score_graph(&mut g, x_soft)?;
        let gap = g.add_scalar(p, -cfg.boundary)?;
        let loss = g.square(gap)?;
        let loss = g.sum(loss)?;
        g.backward(loss)?;
        let grad = g.grad(lv).expect("latent is a parameter");
        for (v, d) in latent.iter_mut().zip(grad) {
            *v -= cfg.lr * d;
        }
        steps += 1;
    }
    Ok(CounterfactualResult {
        query: x_q.to_vec(),
        counterfactual: None,
        alpha: None,
        score: last_score,
        failure: Some(FailureReason::IterationCap),
        seconds: start.elapsed().as_secs_f64(),
        steps,
        latent: Some(latent),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let zq = [0.3, -1.2];
        let mu = [2.0, 4.0];
        assert_eq!(interpolate(&zq, &mu, 0.0).unwrap(), zq.to_vec());
        assert_eq!(interpolate(&zq, &mu, 1.0).unwrap(), mu.to_vec());
        assert_eq!(interpolate(&[0.0, 0.0], &mu, 0.5).unwrap(), vec![1.0, 2.0]);
        assert!(interpolate(&zq, &[1.0], 0.5).is_err());
    }

    #[test]
    fn grid_is_strictly_increasing_in_unit_interval() {
        let cfg = GenerationConfig {
            grid: 7,
            ..Default::default()
        };
        let a = cfg.alphas();
        assert_eq!(a.len(), 7);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(a[0] > 0.0 && a[6] == 1.0);
    }

    #[test]
    fn qualification_requires_crossing() {
        let cfg = GenerationConfig {
            tol: 0.05,
            ..Default::default()
        };
        assert!(cfg.qualifies(0.5));
        assert!(cfg.qualifies(0.54));
        assert!(!cfg.qualifies(0.49));
        assert!(!cfg.qualifies(0.55));
    }
}
