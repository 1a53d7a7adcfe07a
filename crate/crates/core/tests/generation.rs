mod common;

use std::cell::RefCell;

use latent_cf::generation::*;
use latent_cf::numerics::{Graph, Tensor, Var};
use latent_cf::pipeline::{fit_classifier, fit_model, prepare, split_spec, DataSource};
use latent_cf::{Error, Result};
use proptest::prelude::*;

/// `x = (z, z_u, flag)`; decoded rows carry `flag = 1`, queries `flag = 0`.
struct Line {
    target: f64,
    seen_u: RefCell<Vec<f64>>,
}

impl Line {
    fn new(target: f64) -> Self {
        Self {
            target,
            seen_u: RefCell::new(Vec::new()),
        }
    }
}

impl LatentCodec for Line {
    fn encode_one(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((vec![x[0]], vec![x[1]]))
    }

    fn decode_projected(&self, z: &Tensor, z_u: &[f64]) -> Result<Tensor> {
        self.seen_u.borrow_mut().extend_from_slice(z_u);
        let rows: Vec<Vec<f64>> = (0..z.rows()).map(|r| vec![z.get(r, 0), z_u[0], 1.0]).collect();
        Tensor::from_rows(&rows)
    }

    fn decode_graph(&self, _g: &mut Graph, latent: Var, _temperature: f64) -> Result<Var> {
        Ok(latent)
    }

    fn target_centroid(&self) -> Vec<f64> {
        vec![self.target]
    }
}

/// Scores queries with `base` and decoded rows with `curve(z)`.
struct Curve<F> {
    base: f64,
    curve: F,
}

impl<F: Fn(f64) -> f64> Scorer for Curve<F> {
    fn score_rows(&self, x: &Tensor) -> Result<Vec<f64>> {
        Ok((0..x.rows())
            .map(|r| {
                let row = x.row_slice(r);
                if row[2] == 0.0 {
                    self.base
                } else {
                    (self.curve)(row[0])
                }
            })
            .collect())
    }

    fn score_graph(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let z = g.slice(x, 0, 1)?;
        g.sigmoid(z)
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn cfg(tol: f64) -> GenerationConfig {
    GenerationConfig {
        grid: 100,
        boundary: 0.5,
        tol,
        refine: false,
        ..Default::default()
    }
}

const QUERY: [f64; 3] = [0.0, 0.7, 0.0];

#[test]
fn every_point_qualifying_returns_first_grid_point() {
    let c = cfg(0.1);
    let f = Curve {
        base: 0.2,
        curve: |_| 0.5 + 0.1 / 2.0,
    };
    let (r, trace) = generate(&Line::new(1.0), &f, &QUERY, &c).unwrap();
    assert!(r.success());
    assert_eq!(r.alpha, Some(0.01));
    assert_eq!(r.counterfactual.as_deref(), Some(&[0.01, 0.7, 1.0][..]));
    assert_eq!(trace.points.len(), 100);

    let largest = GenerationConfig {
        selection: Selection::Largest,
        ..c
    };
    let (r, _) = generate(&Line::new(1.0), &f, &QUERY, &largest).unwrap();
    assert_eq!(r.alpha, Some(1.0));
}

#[test]
fn never_reaching_the_boundary_is_reported() {
    let f = Curve {
        base: 0.2,
        curve: |z| 0.3 + 0.1 * z,
    };
    let (r, trace) = generate(&Line::new(1.0), &f, &QUERY, &cfg(0.05)).unwrap();
    assert!(!r.success());
    assert_eq!(r.failure, Some(FailureReason::NoBoundaryCrossing));
    assert!(r.counterfactual.is_none());
    assert_eq!(trace.points.len(), 100);
}

#[test]
fn a_jump_over_the_band_is_outside_tolerance() {
    let f = Curve {
        base: 0.2,
        curve: |z| if z < 0.5 { 0.3 } else { 0.9 },
    };
    let c = GenerationConfig {
        refine: true,
        ..cfg(0.05)
    };
    let (r, _) = generate(&Line::new(1.0), &f, &QUERY, &c).unwrap();
    assert_eq!(r.failure, Some(FailureReason::OutsideTolerance));
}

#[test]
fn bisection_finds_a_band_the_grid_misses() {
    let f = Curve {
        base: 0.2,
        curve: |z| sigmoid(200.0 * (z - 0.505)),
    };
    let (r, _) = generate(&Line::new(1.0), &f, &QUERY, &cfg(0.05)).unwrap();
    assert_eq!(r.failure, Some(FailureReason::OutsideTolerance));
    let refined = GenerationConfig {
        refine: true,
        ..cfg(0.05)
    };
    let (r, trace) = generate(&Line::new(1.0), &f, &QUERY, &refined).unwrap();
    let a = r.alpha.unwrap();
    assert!(a > 0.5 && a < 0.51, "alpha {a}");
    assert!(r.score >= 0.5 && r.score < 0.55);
    assert_eq!(trace.points.len(), 100);
}

#[test]
fn nuisance_code_is_held_fixed() {
    let codec = Line::new(2.0);
    let f = Curve {
        base: 0.2,
        curve: |z| sigmoid(z - 1.0),
    };
    let refined = GenerationConfig {
        refine: true,
        ..cfg(0.05)
    };
    generate(&codec, &f, &QUERY, &refined).unwrap();
    let seen = codec.seen_u.borrow();
    assert!(!seen.is_empty());
    assert!(seen.iter().all(|&u| u == QUERY[1]));
}

#[test]
fn trace_starts_at_the_reconstruction() {
    let f = Curve {
        base: 0.2,
        curve: |z| sigmoid(3.0 * z - 1.0),
    };
    let q = [-0.4, 0.1, 0.0];
    let t = trace_path(&Line::new(1.0), &f, &q, &cfg(0.05)).unwrap();
    assert_eq!(t.start, sigmoid(3.0 * -0.4 - 1.0));
    assert_eq!(t.points.len(), 100);
    assert_eq!(t.rows().len(), 101);
    assert!(t.points.windows(2).all(|w| w[0].0 < w[1].0));
}

#[test]
fn query_already_in_target_is_an_error() {
    let f = Curve {
        base: 0.5,
        curve: |_| 0.52,
    };
    assert!(matches!(
        generate(&Line::new(1.0), &f, &QUERY, &cfg(0.05)),
        Err(Error::QueryAlreadyTarget { .. })
    ));
    let g = GdlConfig::default();
    assert!(matches!(
        generate_gdl(&Line::new(1.0), &f, &QUERY, &g),
        Err(Error::QueryAlreadyTarget { .. })
    ));
}

#[test]
fn invalid_configs_are_rejected() {
    let f = Curve {
        base: 0.2,
        curve: |_| 0.52,
    };
    for c in [
        GenerationConfig { grid: 0, ..cfg(0.05) },
        GenerationConfig {
            boundary: 1.0,
            ..cfg(0.05)
        },
        cfg(0.0),
    ] {
        assert!(matches!(generate(&Line::new(1.0), &f, &QUERY, &c), Err(Error::Config(_))));
    }
}

#[test]
fn gdl_at_a_solution_takes_no_steps() {
    let z = (0.52f64 / 0.48).ln();
    let f = Curve { base: 0.2, curve: sigmoid };
    let r = generate_gdl(&Line::new(1.0), &f, &[z, 0.3, 0.0], &GdlConfig::default()).unwrap();
    assert!(r.success());
    assert_eq!(r.steps, 0);
    assert!((r.score - 0.52).abs() < 1e-12);
}

#[test]
fn gdl_matches_hand_simulated_descent_on_a_sigmoid() {
    let cfg = GdlConfig {
        lr: 0.1,
        max_iterations: 500,
        boundary: 0.5,
        tol: 0.05,
        temperature: 0.5,
    };
    let mut z = -2.0f64;
    let mut expected_steps = 0;
    for _ in 0..500 {
        let s = sigmoid(z);
        if s > 0.5 && s - 0.5 < 0.05 {
            break;
        }
        z -= 0.1 * 2.0 * (s - 0.5) * s * (1.0 - s);
        expected_steps += 1;
    }
    assert!(z.abs() <= 0.2, "oracle ended at {z}");

    let f = Curve { base: 0.2, curve: sigmoid };
    let r = generate_gdl(&Line::new(1.0), &f, &[-2.0, 0.3, 0.0], &cfg).unwrap();
    let latent = r.latent.clone().unwrap();
    assert!((latent[0] - z).abs() < 1e-12, "{} vs {z}", latent[0]);
    assert_eq!(latent[1], 0.3);
    assert_eq!(r.steps, expected_steps);
    assert!(latent[0].abs() <= 0.2);
    if r.success() {
        assert!(r.score > 0.5 && r.score < 0.55);
    } else {
        assert_eq!(r.failure, Some(FailureReason::IterationCap));
    }
}

fn validity(tol: f64, refine: bool, queries: &[f64], slope: f64, center: f64) -> usize {
    let f = Curve {
        base: 0.1,
        curve: move |z: f64| sigmoid(slope * (z - center)),
    };
    let c = GenerationConfig {
        grid: 20,
        refine,
        ..cfg(tol)
    };
    queries
        .iter()
        .filter(|&&q| generate(&Line::new(1.5), &f, &[q, 0.0, 0.0], &c).unwrap().0.success())
        .count()
}

proptest! {
    #[test]
    fn successes_satisfy_the_score_bounds(slope in 0.5..80.0f64, center in -1.0..2.0f64,
                                          q in -2.0..1.0f64, tol in 0.001..0.3f64, refine: bool) {
        let f = Curve { base: 0.1, curve: move |z: f64| sigmoid(slope * (z - center)) };
        let c = GenerationConfig { refine, ..cfg(tol) };
        let (r, trace) = generate(&Line::new(1.5), &f, &[q, 0.0, 0.0], &c).unwrap();
        prop_assert_eq!(trace.points.len(), 100);
        if let Some(x) = &r.counterfactual {
            let rescored = f.score_rows(&Tensor::row(x)).unwrap()[0];
            prop_assert_eq!(rescored, r.score);
            prop_assert!(rescored >= 0.5 && (rescored - 0.5).abs() < tol);
            prop_assert!(r.failure.is_none());
        } else {
            prop_assert!(r.failure.is_some());
        }
    }

    #[test]
    fn smaller_tolerance_never_raises_validity(slope in 0.5..80.0f64, center in -1.0..2.0f64,
                                               queries in prop::collection::vec(-2.0..1.0f64, 1..8),
                                               a in 0.001..0.3f64, b in 0.001..0.3f64, refine: bool) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(validity(lo, refine, &queries, slope, center) <= validity(hi, refine, &queries, slope, center));
    }
}

#[test]
fn generation_leaves_model_and_classifier_untouched() {
    let cfg = common::small_config(1);
    let source = DataSource::load(&cfg.data).unwrap();
    let prepared = prepare(&source, &split_spec(&cfg, 0), (None, None)).unwrap();
    let f = fit_classifier(&cfg, &prepared).unwrap();
    let trained = fit_model(&cfg, &prepared, &f).unwrap();
    let model = trained.model.clone();
    let f_hash = f.fingerprint();

    let scores = f.score(&prepared.test.x).unwrap();
    let queries: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] < 0.5).collect();
    let mut monotone = 0;
    for &i in &queries {
        let x = prepared.test.x.row_slice(i);
        generate(&trained.model, &f, x, &cfg.generation).unwrap();
        generate_gdl(&trained.model, &f, x, &cfg.gdl).unwrap();
        let t = trace_path(&trained.model, &f, x, &cfg.generation).unwrap();
        let rows = t.rows();
        monotone += usize::from(rows.windows(2).all(|w| w[1].1 >= w[0].1));
    }
    assert_eq!(trained.model, model);
    assert_eq!(f.fingerprint(), f_hash);
    assert!(
        monotone as f64 >= 0.9 * queries.len() as f64,
        "{monotone} of {} score curves monotone",
        queries.len()
    );
}
