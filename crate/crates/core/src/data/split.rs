use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub repetition: u64,
}

impl SplitSpec {
    pub fn new(seed: u64, repetition: u64) -> Self {
        Self {
            train_fraction: 0.8,
            seed,
            repetition,
        }
    }
}

/// Shuffled train/test row indices for `n` rows. The train part holds
/// `round(fraction * n)` rows; both parts are sorted.
pub fn split(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if n == 0 {
        return Err(Error::DegenerateData("cannot split an empty dataset".into()));
    }
    if !(0.0..=1.0).contains(&spec.train_fraction) {
        return Err(Error::Config(format!("train fraction {} outside [0, 1]", spec.train_fraction)));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 1000 + spec.repetition));
    idx.shuffle(&mut rng);
    let n_train = ((spec.train_fraction * n as f64).round() as usize).min(n);
    let mut test = idx.split_off(n_train);
    idx.sort_unstable();
    test.sort_unstable();
    Ok((idx, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_rows() {
        let (tr, te) = split(10, &SplitSpec::new(3, 0)).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let mut all = [tr, te].concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_and_repetition_dependent() {
        let a = split(50, &SplitSpec::new(7, 0)).unwrap();
        assert_eq!(a, split(50, &SplitSpec::new(7, 0)).unwrap());
        assert_ne!(a.1, split(50, &SplitSpec::new(7, 1)).unwrap().1);
    }

    #[test]
    fn empty_rejected() {
        assert!(split(0, &SplitSpec::new(0, 0)).is_err());
    }
}
