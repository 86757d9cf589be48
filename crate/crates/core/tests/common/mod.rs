#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svylasso::glm::{logistic, Dataset};

/// Logit sample with slopes 1.2 on the first two regressors, weights in
/// [0.2, 3). Regressors are Bernoulli(1/2) when `binary`, else uniform on [-1, 1].
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

/// i.i.d. unit-weight draw from the simulation design: Bernoulli(1/2)
/// regressors and slopes `(1, 1, 1, 0, …)` including the intercept.
pub fn design_sample(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let theta0 = design_theta(p);
    let x = DMatrix::from_fn(n, p + 1, |_, j| if j == 0 { 1.0 } else { f64::from(rng.gen_bool(0.5)) });
    let eta = &x * &theta0;
    let y = DVector::from_fn(n, |i, _| f64::from(rng.gen_bool(logistic(eta[i]))));
    Dataset::new(y, x, DVector::from_element(n, 1.0)).unwrap()
}

pub fn design_theta(p: usize) -> DVector<f64> {
    DVector::from_fn(p + 1, |j, _| if j <= 2 { 1.0 } else { 0.0 })
}

pub fn permuted(ds: &Dataset, seed: u64) -> Dataset {
    let mut rows: Vec<usize> = (0..ds.n()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..rows.len()).rev() {
        rows.swap(i, rng.gen_range(0..=i));
    }
    ds.select_rows(&rows)
}

pub fn with_weights_scaled(ds: &Dataset, c: f64) -> Dataset {
    Dataset::new(ds.y.clone(), ds.x.clone(), &ds.w * c).unwrap()
}
