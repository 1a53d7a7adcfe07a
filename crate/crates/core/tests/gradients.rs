use latent_cf::gradcheck::{max_relative_error, suite};
use latent_cf::numerics::Tensor;

const INSTANCES: u64 = 50;

#[test]
fn every_op_and_loss_matches_central_differences() {
    let mut failures = Vec::new();
    for case in suite() {
        let mut worst = 0.0f64;
        for seed in 0..INSTANCES {
            worst = worst.max((case.run)(seed).unwrap_or_else(|e| panic!("{}: {e}", case.name)));
        }
        if worst >= 1e-4 {
            failures.push(format!("{}: {worst:.3e}", case.name));
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn checker_flags_a_detached_branch() {
    let x = Tensor::row(&[0.7, -1.3]);
    let err = max_relative_error(&[x], |g, v| {
        let copy = g.value(v[0]).clone();
        let k = g.constant(copy);
        let sq = g.mul(v[0], k)?;
        g.sum(sq)
    })
    .unwrap();
    assert!((err - 0.5).abs() < 1e-6, "{err}");
}
