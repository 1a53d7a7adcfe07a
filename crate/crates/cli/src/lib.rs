//! Subcommand implementations behind the `latent-cf` binary.

pub mod plot;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use latent_cf::config::RunConfig;
use latent_cf::data::{Preprocessor, RawTable, Value};
use latent_cf::evaluation::{
    answer_query, base_queries, pca_csv, pca_project, run_protocol, write_report, Method, MetricReport,
};
use latent_cf::generation::{trace_path, CounterfactualResult};
use latent_cf::model::{ClassifierArchive, DisentangledAutoencoder, FrozenClassifier, ModelArchive};
use latent_cf::pipeline::{caps, fit_classifier, fit_model, prepare, split_spec, DataSource, Prepared};
use latent_cf::training::{relabel, EpochTelemetry};
use latent_cf::{Error, Result};

pub const CLASSIFIER_FILE: &str = "classifier.lcf";
pub const MODEL_FILE: &str = "model.lcf";

/// Resolved configuration and output directory.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Context {
    /// `--seed` and `--out` override the config file.
    pub fn load(config: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let mut cfg = match config {
            Some(p) => RunConfig::read(p)?,
            None => RunConfig::synthetic(),
        };
        if let Some(s) = seed {
            cfg = cfg.with_seed(s);
        }
        let out = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self { config: cfg, out })
    }

    pub fn from_config(config: RunConfig, out: PathBuf) -> Self {
        Self { config, out }
    }

    fn ensure_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))
    }

    fn prepared(&self) -> Result<Prepared> {
        let source = DataSource::load(&self.config.data)?;
        prepare(&source, &split_spec(&self.config, 0), caps(&self.config))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn check_preprocessor(found: &Preprocessor, expected: &Preprocessor, what: &str) -> Result<()> {
    if found != expected {
        return Err(Error::Config(format!(
            "{what} was built for different data or a different split than the current configuration"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub archive: PathBuf,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Trains the classifier on the first split and saves it.
pub fn cmd_fit_classifier(ctx: &Context) -> Result<FitReport> {
    let prepared = ctx.prepared()?;
    let f = fit_classifier(&ctx.config, &prepared)?;
    let c = &ctx.config.classifier;
    let info = BTreeMap::from([
        ("seed".to_string(), ctx.config.seed.to_string()),
        ("epochs".to_string(), c.epochs.to_string()),
        ("batch_size".to_string(), c.batch_size.to_string()),
        ("lr".to_string(), c.lr.to_string()),
    ]);
    ctx.ensure_out()?;
    let archive = ctx.out.join(CLASSIFIER_FILE);
    ClassifierArchive {
        classifier: f.clone(),
        preprocessor: prepared.preprocessor.clone(),
        info,
    }
    .save(&archive)?;
    Ok(FitReport {
        archive,
        train_accuracy: f.accuracy(&prepared.train)?,
        test_accuracy: f.accuracy(&prepared.test)?,
    })
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub archive: PathBuf,
    pub telemetry: PathBuf,
    pub epochs: Vec<EpochTelemetry>,
}

pub fn telemetry_csv(rows: &[EpochTelemetry]) -> String {
    let mut s = EpochTelemetry::HEADER.join(",");
    s.push('\n');
    for t in rows {
        let _ = writeln!(
            s,
            "{},{:.8},{:.8},{:.8},{:.8},{:.8},{:.8},{:.4}",
            t.epoch, t.rec, t.cls, t.lkd, t.adv, t.gm, t.total, t.seconds
        );
    }
    s
}

/// Trains the model against a saved classifier and writes the archive and
/// per-epoch telemetry.
pub fn cmd_train(ctx: &Context, classifier: Option<&Path>) -> Result<TrainReport> {
    let cpath = classifier.map(Path::to_path_buf).unwrap_or_else(|| ctx.out.join(CLASSIFIER_FILE));
    let carch = ClassifierArchive::load(&cpath)?;
    let prepared = ctx.prepared()?;
    check_preprocessor(&carch.preprocessor, &prepared.preprocessor, "classifier archive")?;
    let trained = fit_model(&ctx.config, &prepared, &carch.classifier)?;
    let cfg = &ctx.config;
    let t = &cfg.training;
    let info = BTreeMap::from([
        ("seed".to_string(), cfg.seed.to_string()),
        ("epochs".to_string(), t.epochs.to_string()),
        ("batch_size".to_string(), t.batch_size.to_string()),
        ("lambda_lkd".to_string(), t.weights.lkd.to_string()),
        ("lambda_adv".to_string(), t.weights.adv.to_string()),
        ("lr_adversary".to_string(), t.lr_adversary.to_string()),
        ("lr_gm".to_string(), t.lr_gm.to_string()),
        ("lr_autoencoder".to_string(), t.lr_autoencoder.to_string()),
        ("likelihood".to_string(), format!("{:?}", t.likelihood_mode).to_lowercase()),
        ("classifier".to_string(), format!("{:016x}", carch.classifier.fingerprint())),
    ]);
    ctx.ensure_out()?;
    let archive = ctx.out.join(MODEL_FILE);
    ModelArchive {
        model: trained.model,
        adversary: trained.adversary,
        preprocessor: prepared.preprocessor,
        info,
    }
    .save(&archive)?;
    let telemetry = ctx.out.join("telemetry.csv");
    write_file(&telemetry, &telemetry_csv(&trained.telemetry))?;
    Ok(TrainReport {
        archive,
        telemetry,
        epochs: trained.telemetry,
    })
}

#[derive(Clone, Debug)]
pub struct GenerateArgs {
    pub model: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub all_test: bool,
    pub tol: Option<f64>,
    pub grid: Option<usize>,
    pub method: Method,
    pub trace: bool,
}

#[derive(Clone, Debug)]
pub struct GenerateReport {
    pub results: PathBuf,
    pub queries: usize,
    pub successes: usize,
    pub already_target: usize,
    pub traces: Vec<PathBuf>,
}

/// Reads query rows from a CSV with the preprocessor's raw columns.
fn read_queries(path: &Path, prep: &Preprocessor) -> Result<Vec<Vec<f64>>> {
    let table = RawTable::read_csv(path)?;
    table
        .rows
        .iter()
        .map(|row| match prep {
            Preprocessor::Tabular(schema) => Ok(schema.preprocess_row(&table.columns, row)?.0),
            Preprocessor::Image { .. } => prep
                .column_names()
                .iter()
                .map(|name| {
                    let i = table.column_index(name)?;
                    let v = row[i].as_number(name)?;
                    Ok(v.clamp(0.0, 1.0))
                })
                .collect(),
        })
        .collect()
}

fn raw_values(prep: &Preprocessor, v: &[f64]) -> Result<Vec<String>> {
    match prep {
        Preprocessor::Tabular(schema) => Ok(schema.depreprocess(v)?.iter().map(Value::to_string).collect()),
        Preprocessor::Image { .. } => Ok(v.iter().map(|x| format!("{:.6}", x.clamp(0.0, 1.0))).collect()),
    }
}

fn feature_names(prep: &Preprocessor) -> Vec<String> {
    match prep {
        Preprocessor::Tabular(schema) => schema.feature_names(),
        Preprocessor::Image { .. } => prep.column_names(),
    }
}

/// Generates one counterfactual per query row and writes `results.csv`
/// (plus `traces/query_<i>.csv` with `--trace`).
pub fn cmd_generate(ctx: &Context, args: &GenerateArgs) -> Result<GenerateReport> {
    let mut cfg = ctx.config.clone();
    if let Some(tol) = args.tol {
        cfg.generation.tol = tol;
        cfg.gdl.tol = tol;
    }
    if let Some(grid) = args.grid {
        cfg.generation.grid = grid;
    }
    cfg.generation.validate()?;
    cfg.gdl.validate()?;
    if args.trace && args.method != Method::Interpolation {
        return Err(Error::Config("--trace is only available with --method interp".into()));
    }
    let mpath = args.model.clone().unwrap_or_else(|| ctx.out.join(MODEL_FILE));
    let cpath = args.classifier.clone().unwrap_or_else(|| ctx.out.join(CLASSIFIER_FILE));
    let march = ModelArchive::load(&mpath)?;
    let carch = ClassifierArchive::load(&cpath)?;
    check_preprocessor(&carch.preprocessor, &march.preprocessor, "classifier archive")?;
    let prep = &march.preprocessor;
    let (model, f): (&DisentangledAutoencoder, &FrozenClassifier) = (&march.model, &carch.classifier);

    let queries: Vec<Vec<f64>> = match (&args.queries, args.all_test) {
        (Some(path), false) => read_queries(path, prep)?,
        (None, true) => {
            let prepared = ctx.prepared()?;
            check_preprocessor(&prepared.preprocessor, prep, "model archive")?;
            base_queries(f, &prepared.test, cfg.generation.boundary, cfg.max_queries)?
                .into_iter()
                .map(|i| prepared.test.x.row_slice(i).to_vec())
                .collect()
        }
        _ => return Err(Error::Config("give exactly one of --queries FILE or --all-test".into())),
    };

    let names = feature_names(prep);
    let mut s = format!(
        "# method={} tol={} grid={} boundary={}\n",
        args.method.name(),
        cfg.generation.tol,
        cfg.generation.grid,
        cfg.generation.boundary
    );
    let mut header = vec!["query", "status", "failure", "score", "alpha", "steps", "seconds"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    header.extend(names.iter().map(|n| format!("cf_{n}")));
    s.push_str(&header.join(","));
    s.push('\n');

    ctx.ensure_out()?;
    let trace_dir = ctx.out.join("traces");
    if args.trace {
        std::fs::create_dir_all(&trace_dir).map_err(|e| io_err(&trace_dir, e))?;
    }
    let (mut successes, mut already, mut traces) = (0, 0, Vec::new());
    for (i, q) in queries.iter().enumerate() {
        let outcome = answer_query(&cfg, args.method, model, f, q);
        let mut cells = vec![i.to_string()];
        match outcome {
            Err(Error::QueryAlreadyTarget { score, .. }) => {
                already += 1;
                cells.extend(["already_target".into(), String::new(), format!("{score:.6}")]);
                cells.extend(std::iter::repeat_n(String::new(), 3 + names.len()));
            }
            Err(e) => return Err(e),
            Ok((r, _)) => {
                let CounterfactualResult {
                    counterfactual,
                    alpha,
                    score,
                    failure,
                    seconds,
                    steps,
                    ..
                } = r;
                cells.push(if counterfactual.is_some() { "ok" } else { "failed" }.into());
                cells.push(failure.map(|f| format!("{f:?}")).unwrap_or_default());
                cells.push(format!("{score:.6}"));
                cells.push(alpha.map(|a| format!("{a:.6}")).unwrap_or_default());
                cells.push(steps.to_string());
                cells.push(format!("{seconds:.9}"));
                match counterfactual {
                    Some(cf) => {
                        successes += 1;
                        cells.extend(raw_values(prep, &cf)?);
                    }
                    None => cells.extend(std::iter::repeat_n(String::new(), names.len())),
                }
                if args.trace {
                    let trace = trace_path(model, f, q, &cfg.generation)?;
                    let mut t = String::from("alpha,score\n");
                    for (a, sc) in trace.rows() {
                        let _ = writeln!(t, "{a:.6},{sc:.6}");
                    }
                    let path = trace_dir.join(format!("query_{i}.csv"));
                    write_file(&path, &t)?;
                    traces.push(path);
                }
            }
        }
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    let results = ctx.out.join(format!("results_{}.csv", args.method.name()));
    write_file(&results, &s)?;
    Ok(GenerateReport {
        results,
        queries: queries.len(),
        successes,
        already_target: already,
        traces,
    })
}

#[derive(Clone, Debug)]
pub struct EvaluateReport {
    pub dir: PathBuf,
    pub report: MetricReport,
}

/// Runs the repeated split protocol and writes the report files and the
/// PCA export of the first repetition's training embeddings.
pub fn cmd_evaluate(ctx: &Context, methods: &[Method], mut progress: impl FnMut(&str)) -> Result<EvaluateReport> {
    let cfg = &ctx.config;
    let source = DataSource::load(&cfg.data)?;
    let mut pca = None;
    let mut pca_err = None;
    let out = run_protocol(cfg, &source, methods, |rep, outcome| match outcome {
        Ok(o) => {
            progress(&format!("repetition {rep}: {} queries", o.queries.len()));
            if rep == 0 {
                let built = (|| {
                    let (z, _) = o.trained.model.encode(&o.prepared.train.x)?;
                    let labels = relabel(&o.prepared.train, &o.classifier)?.labels().to_vec();
                    pca_csv(&pca_project(&z, cfg.seed)?, &labels)
                })();
                match built {
                    Ok(text) => pca = Some(text),
                    Err(e) => pca_err = Some(e),
                }
            }
        }
        Err(e) => progress(&format!("repetition {rep} failed: {e}")),
    })?;
    if let Some(e) = pca_err {
        return Err(e);
    }
    write_report(&ctx.out, &out)?;
    if let Some(text) = pca {
        write_file(&ctx.out.join("pca.csv"), &text)?;
    }
    Ok(EvaluateReport {
        dir: ctx.out.clone(),
        report: out.report,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Scatter,
    Trace,
}

fn parse_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Parse {
        what: path.display().to_string(),
        detail: detail.into(),
    }
}

/// Renders a PCA export (`x,y,label`) as a scatter or a trace
/// (`alpha,score`) as a line chart.
pub fn cmd_plot(input: &Path, output: &Path, boundary: f64) -> Result<PlotKind> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(input)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(input, io),
            other => parse_err(input, format!("{other:?}")),
        })?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let num = |s: &str, line: usize| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_err(input, format!("line {line}: {s:?} is not a number")))
    };
    let title = input.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let (kind, svg) = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y", "label"] => {
            let mut pts = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let label = rec[2]
                    .parse::<u8>()
                    .map_err(|_| parse_err(input, format!("line {}: bad label {:?}", i + 2, &rec[2])))?;
                pts.push((num(&rec[0], i + 2)?, num(&rec[1], i + 2)?, label));
            }
            if pts.is_empty() {
                return Err(parse_err(input, "no data rows"));
            }
            (PlotKind::Scatter, plot::scatter_svg(&pts, &title))
        }
        ["alpha", "score"] => {
            let mut pts = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                pts.push((num(&rec[0], i + 2)?, num(&rec[1], i + 2)?));
            }
            if pts.is_empty() {
                return Err(parse_err(input, "no data rows"));
            }
            (PlotKind::Trace, plot::trace_svg(&pts, boundary, &title))
        }
        other => {
            return Err(parse_err(
                input,
                format!("unrecognised columns {other:?}; expected x,y,label or alpha,score"),
            ))
        }
    };
    write_file(output, &svg)?;
    Ok(kind)
}
