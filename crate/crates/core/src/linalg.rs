//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Reciprocal condition threshold (on the Cholesky diagonal, squared) below
/// which a symmetric matrix is treated as singular.
const RCOND_MIN: f64 = 1e-14;

/// Cholesky factor of a symmetric positive-definite matrix.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>, block: &str) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Argument(format!("block `{block}` is not square")));
        }
        if m.nrows() == 0 {
            return Err(Error::Singular {
                block: block.to_string(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("block `{block}` has non-finite entries")));
        }
        let chol = Cholesky::new(m.clone()).ok_or_else(|| Error::Singular {
            block: block.to_string(),
        })?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        if !(lo > 0.0) || (lo / hi).powi(2) < RCOND_MIN {
            return Err(Error::Singular {
                block: block.to_string(),
            });
        }
        Ok(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Either a Cholesky factor or a Moore-Penrose pseudo-inverse.
#[derive(Clone, Debug)]
pub enum SymSolver {
    Cholesky(SpdFactor),
    Pseudo(DMatrix<f64>),
}

impl SymSolver {
    /// Factorize, falling back to the pseudo-inverse when the matrix is
    /// singular or indefinite.
    pub fn with_fallback(m: &DMatrix<f64>, block: &str) -> Result<Self> {
        match SpdFactor::new(m, block) {
            Ok(f) => Ok(SymSolver::Cholesky(f)),
            Err(Error::Singular { .. }) => Ok(SymSolver::Pseudo(pinv(m)?)),
            Err(e) => Err(e),
        }
    }

    pub fn is_pseudo(&self) -> bool {
        matches!(self, SymSolver::Pseudo(_))
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            SymSolver::Cholesky(f) => f.solve_vec(b),
            SymSolver::Pseudo(p) => p * b,
        }
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SymSolver::Cholesky(f) => f.solve_mat(b),
            SymSolver::Pseudo(p) => p * b,
        }
    }
}

/// Moore-Penrose pseudo-inverse with the usual `max(m, n) * eps * sigma_max` cutoff.
pub fn pinv(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let eps = f64::EPSILON * (m.nrows().max(m.ncols()) as f64) * smax;
    svd.pseudo_inverse(eps)
        .map_err(|e| Error::Numeric(format!("pseudo-inverse failed: {e}")))
}

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in (i + 1)..k {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}
