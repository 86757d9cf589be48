//! Smooth parameter functions `ρ(θ)` with analytic Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::Dataset;

/// A vector-valued function of the full coefficient vector. Functions such as
/// average marginal effects depend on the sample, so the dataset is passed in.
pub trait ParamFn: Send + Sync {
    /// Output dimension `r`.
    fn dim(&self) -> usize;

    fn describe(&self) -> String;

    fn value(&self, ds: &Dataset, theta: &DVector<f64>) -> Result<DVector<f64>>;

    /// `(p+1) × r` matrix whose columns are the gradients of the outputs.
    fn jacobian(&self, ds: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// `ρ(θ) = θ_j`.
#[derive(Clone, Copy, Debug)]
pub struct Coordinate(pub usize);

impl ParamFn for Coordinate {
    fn dim(&self) -> usize {
        1
    }

    fn describe(&self) -> String {
        format!("theta[{}]", self.0)
    }

    fn value(&self, _ds: &Dataset, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_index(self.0, theta.len())?;
        Ok(DVector::from_element(1, theta[self.0]))
    }

    fn jacobian(&self, _ds: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_index(self.0, theta.len())?;
        let mut j = DMatrix::zeros(theta.len(), 1);
        j[(self.0, 0)] = 1.0;
        Ok(j)
    }
}

/// `ρ(θ) = (θ_j)_{j ∈ idx}` for a joint restriction.
#[derive(Clone, Debug)]
pub struct Coordinates(pub Vec<usize>);

impl ParamFn for Coordinates {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn describe(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|j| j.to_string()).collect();
        format!("theta[{}]", parts.join(","))
    }

    fn value(&self, _ds: &Dataset, theta: &DVector<f64>) -> Result<DVector<f64>> {
        for &j in &self.0 {
            check_index(j, theta.len())?;
        }
        Ok(DVector::from_iterator(self.0.len(), self.0.iter().map(|&j| theta[j])))
    }

    fn jacobian(&self, _ds: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(theta.len(), self.0.len());
        for (c, &j) in self.0.iter().enumerate() {
            check_index(j, theta.len())?;
            m[(j, c)] = 1.0;
        }
        Ok(m)
    }
}

fn check_index(j: usize, k: usize) -> Result<()> {
    if j >= k {
        Err(Error::Argument(format!("coefficient index {j} out of range for {k} parameters")))
    } else {
        Ok(())
    }
}
