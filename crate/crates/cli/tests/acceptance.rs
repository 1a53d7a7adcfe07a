use std::f64::consts::{LN_2, PI};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use latent_cf::config::RunConfig;
use latent_cf::data::{FeatureLayout, Preprocessor};
use latent_cf::evaluation::{
    median, noise_reconstruction, proximity, run_repetition, sparsity, validity, Method, RepetitionOutcome,
};
use latent_cf::gradcheck::suite;
use latent_cf::losses::{
    adversarial_loss, classification_loss, likelihood_loss, reconstruction_loss, LikelihoodMode,
};
use latent_cf::model::{
    Activation, AdversarialClassifier, AutoencoderSpec, DisentangledAutoencoder, GaussianMixtureHead, ModelArchive,
};
use latent_cf::numerics::{Graph, Tensor};
use latent_cf::pipeline::DataSource;
use latent_cf::training::relabel;
use latent_cf::Result;
use latent_cf_cli::{cmd_evaluate, Context};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> Result<RunConfig> {
    RunConfig::read(&repo().join("configs").join(name))
}

fn gradients() -> Result<Verdict> {
    let start = Instant::now();
    let mut worst = (0.0f64, "");
    for case in suite() {
        for seed in 0..50 {
            let e = (case.run)(seed)?;
            if e > worst.0 {
                worst = (e, case.name);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(verdict(
        worst.0 < 1e-4 && secs < 30.0,
        format!(
            "{} cases x 50 instances, worst relative error {:.2e} ({}), {secs:.1} s",
            suite().len(),
            worst.0,
            worst.1
        ),
    ))
}

fn scalar(f: impl FnOnce(&mut Graph) -> Result<latent_cf::numerics::Var>) -> Result<f64> {
    let mut g = Graph::inference();
    let v = f(&mut g)?;
    g.value(v).item()
}

fn loss_oracles() -> Result<Verdict> {
    let head = |m0: Vec<f64>, m1: Vec<f64>| {
        let d = m0.len();
        GaussianMixtureHead::from_parts([m0, m1], [vec![0.0; d], vec![0.0; d]])
    };
    let mut checks: Vec<(&str, f64, f64)> = Vec::new();

    let gm = head(vec![0.0], vec![4.0])?;
    let cls = scalar(|g| {
        let z = g.constant(Tensor::row(&[4.0]));
        let v = gm.bind(g, false);
        classification_loss(g, z, &[1], &v)
    })?;
    checks.push(("L_cls 1-D", cls, (1.0 + (-8.0f64).exp()).ln()));

    let gm = head(vec![1.0, -1.0, 0.5], vec![3.0, 3.0, 3.0])?;
    let lkd = scalar(|g| {
        let z = g.constant(Tensor::row(&[1.0, -1.0, 0.5]));
        let v = gm.bind(g, false);
        likelihood_loss(g, z, &[0], &v, LikelihoodMode::Sum)
    })?;
    checks.push(("L_lkd at mean", lkd, 1.5 * (2.0 * PI).ln()));

    let adv = scalar(|g| {
        let p = g.constant(Tensor::column(&[0.5, 0.5, 0.5, 0.5]));
        adversarial_loss(g, p, &[0, 1, 1, 0])
    })?;
    checks.push(("L_adv uniform", adv, LN_2));

    let rec = scalar(|g| {
        let a = g.constant(Tensor::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]])?);
        let b = g.constant(Tensor::from_rows(&[vec![3.0, 4.0], vec![1.0, 1.0]])?);
        reconstruction_loss(g, a, b)
    })?;
    checks.push(("L_rec", rec, 12.5));

    let worst = checks.iter().map(|(_, got, want)| (got - want).abs()).fold(0.0, f64::max);
    let detail = checks
        .iter()
        .map(|(n, got, _)| format!("{n}={got:.6e}"))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(verdict(worst < 1e-9, format!("{detail}, worst |error| {worst:.1e}")))
}

struct Synthetic {
    outcome: RepetitionOutcome,
    elapsed: Duration,
    noise_seed: u64,
}

fn synthetic() -> Result<Synthetic> {
    let cfg = config("synthetic.toml")?;
    let start = Instant::now();
    let source = DataSource::load(&cfg.data)?;
    let outcome = run_repetition(&cfg, &source, 0, &Method::ALL)?;
    Ok(Synthetic {
        outcome,
        elapsed: start.elapsed(),
        noise_seed: cfg.seed,
    })
}

fn records(o: &RepetitionOutcome, m: Method) -> impl Iterator<Item = &latent_cf::evaluation::QueryRecord> {
    o.records.iter().filter(move |r| r.method == m)
}

fn end_to_end(s: &Synthetic) -> Result<Vec<(&'static str, Verdict)>> {
    let o = &s.outcome;
    let model = &o.trained.model;
    let n = o.queries.len();
    let ok = records(o, Method::Interpolation).filter(|r| r.result.success()).count();
    let valid = validity(ok, n)?;

    let train = relabel(&o.prepared.train, &o.classifier)?;
    let (z, _) = model.encode(&train.data().x)?;
    let own = (0..z.rows())
        .filter(|&r| {
            let y = usize::from(train.labels()[r]);
            model.gm().mahalanobis_sq(z.row_slice(r), y) <= model.gm().mahalanobis_sq(z.row_slice(r), 1 - y)
        })
        .count();
    let own = own as f64 / z.rows() as f64;

    let test = relabel(&o.prepared.test, &o.classifier)?;
    let (_, u) = model.encode(&test.data().x)?;
    let adv = o.trained.adversary.accuracy(&u, test.labels())?;

    let secs = s.elapsed.as_secs_f64();
    Ok(vec![
        ("3a", verdict(n <= 200 && valid >= 95.0, format!("validity {valid:.1}% ({ok}/{n} queries)"))),
        ("3b", verdict(own >= 0.9, format!("{:.1}% of training embeddings closest to own centroid", 100.0 * own))),
        ("3c", verdict(adv <= 0.6, format!("adversary accuracy on held-out z_u {:.1}%", 100.0 * adv))),
        ("3d", verdict(secs <= 120.0, format!("repetition wall-clock {secs:.1} s"))),
    ])
}

fn speed(s: &Synthetic) -> Verdict {
    let times = |m| records(&s.outcome, m).map(|r| r.result.seconds).collect::<Vec<_>>();
    match (median(&times(Method::Interpolation)), median(&times(Method::Gdl))) {
        (Some(i), Some(g)) => verdict(
            i * 10.0 <= g,
            format!("median seconds interp {i:.2e}, gdl {g:.2e}, ratio {:.1}", g / i),
        ),
        _ => verdict(false, "no queries"),
    }
}

fn in_sample(s: &Synthetic) -> Result<Verdict> {
    let rec = |m| records(&s.outcome, m).filter_map(|r| r.reconstruction).collect::<Vec<_>>();
    let noise = noise_reconstruction(&s.outcome.trained.model, 1000, s.noise_seed)?;
    Ok(match (median(&rec(Method::Interpolation)), median(&rec(Method::Gdl)), median(&noise)) {
        (Some(i), Some(g), Some(n)) => verdict(
            i <= g && i <= 0.2 * n,
            format!("median reconstruction interp {i:.4}, gdl {g:.4}, uniform noise {n:.4}"),
        ),
        (i, g, n) => verdict(false, format!("missing medians: interp {i:?}, gdl {g:?}, noise {n:?}")),
    })
}

fn nuisance(s: &Synthetic) -> Verdict {
    let o = &s.outcome;
    let (mut info, mut noise, mut count) = (0.0, 0.0, 0usize);
    for r in records(o, Method::Interpolation) {
        if let Some(cf) = &r.result.counterfactual {
            let q = o.prepared.test.x.row_slice(r.row);
            let d: Vec<f64> = q.iter().zip(cf).map(|(a, b)| (a - b).abs()).collect();
            info += d[..2].iter().sum::<f64>() / 2.0;
            noise += d[2..].iter().sum::<f64>() / (d.len() - 2) as f64;
            count += 1;
        }
    }
    if count == 0 {
        return verdict(false, "no successful counterfactuals");
    }
    let (info, noise) = (info / count as f64, noise / count as f64);
    verdict(
        noise <= 0.25 * info,
        format!("mean |change| informative {info:.4}, nuisance {noise:.4} ({:.1}%)", 100.0 * noise / info),
    )
}

fn mnist() -> Result<Verdict> {
    let cfg = config("mnist.toml")?;
    if let latent_cf::config::DataConfig::Mnist { images, labels, .. } = &cfg.data {
        for p in [images, labels] {
            if !p.exists() {
                return Ok(verdict(
                    false,
                    format!("{} not found; run scripts/mnist_json_to_idx.py", p.display()),
                ));
            }
        }
    }
    let start = Instant::now();
    let source = DataSource::load(&cfg.data)?;
    let o = run_repetition(&cfg, &source, 0, &[Method::Interpolation])?;
    let secs = start.elapsed().as_secs_f64();
    let ok = o.records.iter().filter(|r| r.result.success()).count();
    let valid = validity(ok, o.queries.len())?;
    Ok(verdict(
        valid >= 70.0 && secs <= 900.0,
        format!(
            "validity {valid:.1}% ({ok}/{}), {} train images, {secs:.1} s",
            o.queries.len(),
            o.prepared.train.len()
        ),
    ))
}

fn determinism() -> Result<Verdict> {
    let cfg = config("synthetic.toml")?;
    let dir = tempfile::tempdir().expect("tempdir");
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let ctx = Context::from_config(cfg.clone(), dir.path().join(name));
        cmd_evaluate(&ctx, &Method::ALL, |_| {})?;
        let path = ctx.out.join("report.csv");
        reports.push(std::fs::read(&path).expect("report.csv"));
    }
    Ok(verdict(
        reports[0] == reports[1],
        format!("report.csv {} and {} bytes", reports[0].len(), reports[1].len()),
    ))
}

fn persistence() -> Result<Verdict> {
    let layout = FeatureLayout::continuous_only(5);
    let spec = AutoencoderSpec {
        input_width: layout.width(),
        latent_dim: 2,
        nuisance_dim: 4,
        encoder_hidden: vec![16, 8],
        decoder_hidden: vec![8, 16],
        hidden_activation: Activation::LeakyRelu,
        layout,
        continuous_activation: Activation::Tanh,
    };
    let a = ModelArchive {
        model: DisentangledAutoencoder::new(&spec, 3)?,
        adversary: AdversarialClassifier::new(4, &[8], 4)?,
        preprocessor: Preprocessor::Image { pixels: 5 },
        info: Default::default(),
    };
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("model.lcf");
    a.save(&path)?;
    let b = ModelArchive::load(&path)?;
    let data: Vec<f64> = (0..500).map(|i| (i as f64 * 0.731).sin()).collect();
    let x = Tensor::matrix(100, 5, data)?;
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let (za, ua) = a.model.encode(&x)?;
    let (zb, ub) = b.model.encode(&x)?;
    let same = bits(&za) == bits(&zb)
        && bits(&ua) == bits(&ub)
        && bits(&a.model.decode(&za, &ua)?) == bits(&b.model.decode(&zb, &ub)?);
    Ok(verdict(same, "encode and decode on 100 inputs"))
}

fn metric_units() -> Result<Verdict> {
    let p = proximity(&[0.0, 0.0], &[3.0, 4.0])?;
    let s = sparsity(&[0.2, 0.7], &[0.2, 0.7])?;
    let v = validity(9, 10)?;
    Ok(verdict(
        p == 5.0 && s == 0.0 && v == 90.0,
        format!("proximity {p}, sparsity {s}, validity {v}"),
    ))
}

fn line(id: &str, r: Result<Verdict>) -> bool {
    let v = r.unwrap_or_else(|e| verdict(false, format!("error: {e}")));
    println!("criterion {id}: {} - {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    v.pass
}

#[test]
fn acceptance() {
    let mut passed = Vec::new();
    passed.push(line("1", gradients()));
    passed.push(line("2", loss_oracles()));
    match synthetic() {
        Ok(s) => {
            match end_to_end(&s) {
                Ok(vs) => {
                    for (id, v) in vs {
                        passed.push(line(id, Ok(v)));
                    }
                }
                Err(e) => passed.push(line("3", Err(e))),
            }
            passed.push(line("4", Ok(speed(&s))));
            passed.push(line("5", in_sample(&s)));
            passed.push(line("6", Ok(nuisance(&s))));
        }
        Err(e) => {
            for id in ["3", "4", "5", "6"] {
                passed.push(line(id, Err(latent_cf::Error::Contract(e.to_string()))));
            }
        }
    }
    passed.push(line("7", mnist()));
    passed.push(line("8", determinism()));
    passed.push(line("9", persistence()));
    passed.push(line("10", metric_units()));
    assert!(passed.iter().all(|&p| p), "some acceptance criteria failed");
}
