//! Counterfactual quality metrics, the repeated split protocol and the PCA
//! export of latent embeddings.
//!
//! Proximity and sparsity are measured in preprocessed space. Validity counts
//! every query; the other metrics average over successful queries only.

use std::fmt::{self, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::generation::{generate, generate_gdl, CounterfactualResult};
use crate::model::{DisentangledAutoencoder, FrozenClassifier};
use crate::numerics::{derive_seed, Tensor};
use crate::pipeline::{caps, fit_classifier, fit_model, prepare, split_spec, DataSource, Prepared};
use crate::training::TrainedModel;

fn check_widths(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(op, format!("{} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// `‖a − b‖₂`.
pub fn proximity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_widths("proximity", a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

/// `‖a − b‖₁`.
pub fn sparsity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_widths("sparsity", a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// Percentage of successful queries.
pub fn validity(successes: usize, queries: usize) -> Result<f64> {
    if queries == 0 || successes > queries {
        return Err(Error::Contract(format!("validity of {successes} out of {queries}")));
    }
    Ok(100.0 * successes as f64 / queries as f64)
}

/// Squared round-trip error of `x` through both encoders and the decoder.
pub fn reconstruction_metric(model: &DisentangledAutoencoder, x: &[f64]) -> Result<f64> {
    Ok(model.reconstruction_errors(&Tensor::row(x))?[0])
}

/// Reconstruction metric of `n` vectors drawn uniformly from `[0, 1]^width`.
pub fn noise_reconstruction(model: &DisentangledAutoencoder, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = model.input_width();
    let data = (0..n * width).map(|_| rng.random::<f64>()).collect();
    model.reconstruction_errors(&Tensor::matrix(n, width, data)?)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for one value).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd, n })
    }
}

impl fmt::Display for MeanSd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = f.precision().unwrap_or(3);
        write!(f, "{:.p$}±{:.p$}", self.mean, self.sd)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Interpolation,
    Gdl,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Interpolation, Method::Gdl];

    pub fn name(self) -> &'static str {
        match self {
            Method::Interpolation => "interp",
            Method::Gdl => "gdl",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interp" | "interpolation" => Ok(Method::Interpolation),
            "gdl" => Ok(Method::Gdl),
            _ => Err(Error::Config(format!("unknown method {s:?} (expected interp or gdl)"))),
        }
    }
}

/// One query answered by one method.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRecord {
    pub repetition: usize,
    pub method: Method,
    /// Row of the query in the repetition's test set.
    pub row: usize,
    pub result: CounterfactualResult,
    pub proximity: Option<f64>,
    pub sparsity: Option<f64>,
    pub reconstruction: Option<f64>,
}

/// Runs one method on one query and scores the outcome.
pub fn answer_query(
    cfg: &RunConfig,
    method: Method,
    model: &DisentangledAutoencoder,
    f: &FrozenClassifier,
    x_q: &[f64],
) -> Result<(CounterfactualResult, Option<(f64, f64, f64)>)> {
    let result = match method {
        Method::Interpolation => generate(model, f, x_q, &cfg.generation)?.0,
        Method::Gdl => generate_gdl(model, f, x_q, &cfg.gdl)?,
    };
    let metrics = match &result.counterfactual {
        Some(cf) => Some((
            proximity(x_q, cf)?,
            sparsity(x_q, cf)?,
            reconstruction_metric(model, cf)?,
        )),
        None => None,
    };
    Ok((result, metrics))
}

/// Test rows the classifier assigns to the base class, capped at `max`.
pub fn base_queries(f: &FrozenClassifier, test: &Dataset, boundary: f64, max: Option<usize>) -> Result<Vec<usize>> {
    let scores = f.score(&test.x)?;
    Ok(scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s < boundary)
        .map(|(i, _)| i)
        .take(max.unwrap_or(usize::MAX))
        .collect())
}

/// Per-repetition means for one method.
#[derive(Clone, Debug, PartialEq)]
pub struct RepetitionSummary {
    pub repetition: usize,
    pub method: Method,
    pub queries: usize,
    pub successes: usize,
    pub validity: f64,
    pub seconds: Option<f64>,
    pub reconstruction: Option<f64>,
    pub sparsity: Option<f64>,
    pub proximity: Option<f64>,
}

impl RepetitionSummary {
    pub fn from_records(repetition: usize, method: Method, records: &[QueryRecord]) -> Result<Self> {
        let own: Vec<&QueryRecord> = records
            .iter()
            .filter(|r| r.repetition == repetition && r.method == method)
            .collect();
        let ok: Vec<&&QueryRecord> = own.iter().filter(|r| r.result.success()).collect();
        let mean = |xs: Vec<f64>| MeanSd::of(&xs).map(|m| m.mean);
        Ok(Self {
            repetition,
            method,
            queries: own.len(),
            successes: ok.len(),
            validity: if own.is_empty() { 0.0 } else { validity(ok.len(), own.len())? },
            seconds: mean(ok.iter().map(|r| r.result.seconds).collect()),
            reconstruction: mean(ok.iter().filter_map(|r| r.reconstruction).collect()),
            sparsity: mean(ok.iter().filter_map(|r| r.sparsity).collect()),
            proximity: mean(ok.iter().filter_map(|r| r.proximity).collect()),
        })
    }
}

/// Aggregate across repetitions for one method.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodReport {
    pub method: Method,
    pub seconds: Option<MeanSd>,
    pub reconstruction: Option<MeanSd>,
    pub sparsity: Option<MeanSd>,
    pub validity: Option<MeanSd>,
    pub proximity: Option<MeanSd>,
    pub repetitions: usize,
    pub queries: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub methods: Vec<MethodReport>,
    pub summaries: Vec<RepetitionSummary>,
    /// Repetitions that aborted, with the error message.
    pub failed: Vec<(usize, String)>,
}

impl MetricReport {
    pub fn aggregate(methods: &[Method], summaries: Vec<RepetitionSummary>, failed: Vec<(usize, String)>) -> Self {
        let methods = methods
            .iter()
            .map(|&m| {
                let own: Vec<&RepetitionSummary> = summaries.iter().filter(|s| s.method == m).collect();
                let over = |get: &dyn Fn(&RepetitionSummary) -> Option<f64>| {
                    MeanSd::of(&own.iter().filter_map(|s| get(s)).collect::<Vec<_>>())
                };
                MethodReport {
                    method: m,
                    seconds: over(&|s| s.seconds),
                    reconstruction: over(&|s| s.reconstruction),
                    sparsity: over(&|s| s.sparsity),
                    validity: over(&|s| (s.queries > 0).then_some(s.validity)),
                    proximity: over(&|s| s.proximity),
                    repetitions: own.len(),
                    queries: own.iter().map(|s| s.queries).sum(),
                }
            })
            .collect();
        Self {
            methods,
            summaries,
            failed,
        }
    }

    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Everything produced by one repetition.
#[derive(Clone, Debug)]
pub struct RepetitionOutcome {
    pub prepared: Prepared,
    pub classifier: FrozenClassifier,
    pub trained: TrainedModel,
    pub queries: Vec<usize>,
    pub records: Vec<QueryRecord>,
}

/// Split, pretrain, relabel, train and answer every base-class test query.
pub fn run_repetition(cfg: &RunConfig, source: &DataSource, repetition: usize, methods: &[Method]) -> Result<RepetitionOutcome> {
    let prepared = prepare(source, &split_spec(cfg, repetition as u64), caps(cfg))?;
    let classifier = fit_classifier(cfg, &prepared)?;
    let trained = fit_model(cfg, &prepared, &classifier)?;
    let queries = base_queries(&classifier, &prepared.test, cfg.generation.boundary, cfg.max_queries)?;
    let mut records = Vec::with_capacity(queries.len() * methods.len());
    for &method in methods {
        for &row in &queries {
            let (result, metrics) = answer_query(cfg, method, &trained.model, &classifier, prepared.test.x.row_slice(row))?;
            records.push(QueryRecord {
                repetition,
                method,
                row,
                result,
                proximity: metrics.map(|m| m.0),
                sparsity: metrics.map(|m| m.1),
                reconstruction: metrics.map(|m| m.2),
            });
        }
    }
    Ok(RepetitionOutcome {
        prepared,
        classifier,
        trained,
        queries,
        records,
    })
}

#[derive(Clone, Debug)]
pub struct ProtocolOutput {
    pub report: MetricReport,
    pub records: Vec<QueryRecord>,
}

/// Runs `cfg.repetitions` repetitions on distinct splits. A repetition that
/// errors is recorded in `failed` and the rest are still aggregated.
pub fn run_protocol(
    cfg: &RunConfig,
    source: &DataSource,
    methods: &[Method],
    mut on_repetition: impl FnMut(usize, &Result<RepetitionOutcome>),
) -> Result<ProtocolOutput> {
    if methods.is_empty() {
        return Err(Error::Config("no generation method selected".into()));
    }
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    let mut failed = Vec::new();
    for rep in 0..cfg.repetitions {
        let outcome = run_repetition(cfg, source, rep, methods);
        on_repetition(rep, &outcome);
        match outcome {
            Ok(o) => {
                for &m in methods {
                    summaries.push(RepetitionSummary::from_records(rep, m, &o.records)?);
                }
                records.extend(o.records);
            }
            Err(e) => failed.push((rep, e.to_string())),
        }
    }
    Ok(ProtocolOutput {
        report: MetricReport::aggregate(methods, summaries, failed),
        records,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".into())
}

fn pair(v: Option<MeanSd>) -> String {
    match v {
        Some(m) => format!("{:.6},{:.6}", m.mean, m.sd),
        None => "NA,NA".into(),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Deterministic metrics, one row per method. Timing lives in a separate file.
pub fn report_csv(report: &MetricReport) -> String {
    let mut s = String::from(
        "method,repetitions,queries,reconstruction_mean,reconstruction_sd,sparsity_mean,sparsity_sd,validity_mean,validity_sd,proximity_mean,proximity_sd\n",
    );
    for m in &report.methods {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            m.method.name(),
            m.repetitions,
            m.queries,
            pair(m.reconstruction),
            pair(m.sparsity),
            pair(m.validity),
            pair(m.proximity)
        );
    }
    s
}

pub fn timing_csv(report: &MetricReport) -> String {
    let mut s = String::from("method,seconds_mean,seconds_sd\n");
    for m in &report.methods {
        let _ = writeln!(s, "{},{}", m.method.name(), pair(m.seconds));
    }
    s
}

pub fn per_query_csv(records: &[QueryRecord]) -> String {
    let mut s = String::from("repetition,method,row,success,failure,score,steps,proximity,sparsity,reconstruction\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.6},{},{},{},{}",
            r.repetition,
            r.method.name(),
            r.row,
            r.result.success(),
            r.result.failure.map(|f| format!("{f:?}")).unwrap_or_default(),
            r.result.score,
            r.result.steps,
            opt(r.proximity),
            opt(r.sparsity),
            opt(r.reconstruction)
        );
    }
    s
}

pub fn timing_per_query_csv(records: &[QueryRecord]) -> String {
    let mut s = String::from("repetition,method,row,seconds\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{:.9}", r.repetition, r.method.name(), r.row, r.result.seconds);
    }
    s
}

/// Human-readable table in the column order time, reconstruction,
/// sparsity, validity, proximity.
pub fn report_table(report: &MetricReport) -> String {
    let cell = |v: Option<MeanSd>| v.map(|m| format!("{m:.3}")).unwrap_or_else(|| "n/a".into());
    let mut s = format!(
        "{:<8} {:>20} {:>20} {:>20} {:>18} {:>20}\n",
        "method", "time (s)", "reconstruction", "sparsity", "validity (%)", "proximity"
    );
    for m in &report.methods {
        let _ = writeln!(
            s,
            "{:<8} {:>20} {:>20} {:>20} {:>18} {:>20}",
            m.method.name(),
            m.seconds.map(|t| format!("{t:.4}")).unwrap_or_else(|| "n/a".into()),
            cell(m.reconstruction),
            cell(m.sparsity),
            m.validity.map(|v| format!("{v:.1}")).unwrap_or_else(|| "n/a".into()),
            cell(m.proximity)
        );
    }
    let reps = report.summaries.iter().map(|s| s.repetition).collect::<std::collections::BTreeSet<_>>();
    let _ = writeln!(s, "\nrepetitions completed: {}", reps.len());
    for (rep, msg) in &report.failed {
        let _ = writeln!(s, "repetition {rep} failed: {msg}");
    }
    s
}

/// Writes `report.csv`, `timing.csv`, `per_query.csv`,
/// `timing_per_query.csv` and `report.txt` into `dir`.
pub fn write_report(dir: &Path, out: &ProtocolOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("report.csv"), &report_csv(&out.report))?;
    write_text(&dir.join("timing.csv"), &timing_csv(&out.report))?;
    write_text(&dir.join("per_query.csv"), &per_query_csv(&out.records))?;
    write_text(&dir.join("timing_per_query.csv"), &timing_per_query_csv(&out.records))?;
    write_text(&dir.join("report.txt"), &report_table(&out.report))
}

/// Two-component PCA of a set of embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// `(n, 2)` projected coordinates.
    pub coords: Tensor,
    /// Unit principal axes.
    pub components: [Vec<f64>; 2],
    /// Fraction of total variance captured by each axis.
    pub explained: [f64; 2],
}

const POWER_ITERATIONS: usize = 500;

/// Centers `z` and projects it onto the top two covariance eigenvectors,
/// found by power iteration with deflation from a seeded start vector.
pub fn pca_project(z: &Tensor, seed: u64) -> Result<Pca> {
    let (n, d) = (z.rows(), z.cols());
    if n < 3 || d < 2 {
        return Err(Error::Contract(format!("PCA needs at least 3 rows and 2 columns, got ({n}, {d})")));
    }
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| z.row_slice(i)[j]).sum::<f64>() / n as f64).collect();
    let centered: Vec<Vec<f64>> = (0..n)
        .map(|i| z.row_slice(i).iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for row in &centered {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += row[a] * row[b];
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i][i]).sum();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 40));
    let mut components: [Vec<f64>; 2] = [vec![0.0; d], vec![0.0; d]];
    let mut eigen = [0.0; 2];
    for k in 0..2 {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut lambda = 0.0;
        for _ in 0..POWER_ITERATIONS {
            let mut w: Vec<f64> = (0..d).map(|a| (0..d).map(|b| cov[a][b] * v[b]).sum()).collect();
            if k == 1 {
                let dot: f64 = w.iter().zip(&components[0]).map(|(x, y)| x * y).sum();
                for (x, y) in w.iter_mut().zip(&components[0]) {
                    *x -= dot * y;
                }
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                // Rank-deficient: pick any unit vector orthogonal to the first axis.
                w = orthogonal_unit(&components[0]);
                lambda = 0.0;
                v = w;
                break;
            }
            lambda = norm;
            v = w.into_iter().map(|x| x / norm).collect();
        }
        eigen[k] = lambda;
        components[k] = v;
        if k == 0 {
            for a in 0..d {
                for b in 0..d {
                    cov[a][b] -= lambda * components[0][a] * components[0][b];
                }
            }
        }
    }
    let explained = if trace > 0.0 {
        [eigen[0] / trace, eigen[1] / trace]
    } else {
        [0.0, 0.0]
    };
    let coords: Vec<f64> = centered
        .iter()
        .flat_map(|row| {
            components
                .iter()
                .map(|c| row.iter().zip(c).map(|(x, y)| x * y).sum::<f64>())
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(Pca {
        coords: Tensor::matrix(n, 2, coords)?,
        components,
        explained,
    })
}

fn orthogonal_unit(u: &[f64]) -> Vec<f64> {
    let j = (0..u.len()).min_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs())).unwrap_or(0);
    let mut e = vec![0.0; u.len()];
    e[j] = 1.0;
    let dot = u[j];
    let mut w: Vec<f64> = e.iter().zip(u).map(|(x, y)| x - dot * y).collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in w.iter_mut() {
        *x /= norm;
    }
    w
}

/// `x,y,label` rows for the plotter.
pub fn pca_csv(pca: &Pca, labels: &[u8]) -> Result<String> {
    if labels.len() != pca.coords.rows() {
        return Err(Error::dim("pca_csv", format!("{} labels for {} rows", labels.len(), pca.coords.rows())));
    }
    let mut s = String::from("x,y,label\n");
    for (i, y) in labels.iter().enumerate() {
        let r = pca.coords.row_slice(i);
        let _ = writeln!(s, "{:.6},{:.6},{y}", r[0], r[1]);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd_sample_formula() {
        let m = MeanSd::of(&[1.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.sd - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(MeanSd::of(&[1.0, 1.0, 1.0]).unwrap().sd, 0.0);
        assert_eq!(MeanSd::of(&[4.0]).unwrap().sd, 0.0);
        assert!(MeanSd::of(&[]).is_none());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("prototype".parse::<Method>().is_err());
    }
}
