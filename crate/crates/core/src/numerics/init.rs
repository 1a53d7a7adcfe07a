use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Tensor of `N(0, scale²)` draws, reproducible from `seed`.
pub fn seeded_normal_init(shape: &[usize], seed: u64, scale: f64) -> Result<Tensor> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Contract(format!("init scale must be positive, got {scale}")));
    }
    let n: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, scale).expect("positive finite scale");
    let data = (0..n).map(|_| normal.sample(&mut rng)).collect();
    Tensor::new(shape.to_vec(), data)
}

/// Derives an independent stream seed from a base seed and a label.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined value
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
