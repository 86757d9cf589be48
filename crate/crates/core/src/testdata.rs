//! Shared synthetic fixtures for unit tests.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::glm::{logistic, Dataset};

/// Logit data with two strong slopes, uniform or binary regressors and
/// heterogeneous weights.
pub fn logit_sample(n: usize, p: usize, binary: bool, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p + 1, |_, j| {
        if j == 0 {
            1.0
        } else if binary {
            f64::from(rng.gen_bool(0.5))
        } else {
            rng.gen_range(-1.0..1.0)
        }
    });
    let y = DVector::from_fn(n, |i, _| {
        let t = -0.5 + (1..=p.min(2)).map(|j| 1.2 * x[(i, j)]).sum::<f64>();
        f64::from(rng.gen_bool(logistic(t)))
    });
    let w = DVector::from_fn(n, |_, _| rng.gen_range(0.2..3.0));
    Dataset::new(y, x, w).unwrap()
}
