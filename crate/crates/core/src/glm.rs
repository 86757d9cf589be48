//! Survey-weighted GLM loss, score and curvature matrices.
//!
//! The weighted log-likelihood is `L(θ) = -n⁻¹ Σ wᵢ g(yᵢ, xᵢ'θ)`; the score,
//! negative Hessian and information are
//!
//! ```text
//! S(θ) = -n⁻¹ Σ wᵢ xᵢ ġ(yᵢ, xᵢ'θ)
//! Ĥ(θ) =  n⁻¹ Σ wᵢ xᵢxᵢ' g̈(yᵢ, xᵢ'θ)
//! Î(θ) =  n⁻¹ Σ wᵢ² xᵢxᵢ' ġ(yᵢ, xᵢ'θ)²
//! ```
//!
//! The weight enters `Ĥ` linearly and `Î` quadratically. Column 0 of the
//! design is always the intercept, and every index set used downstream is
//! over `{0..p}` with `0` the intercept.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{submatrix, subvector};

/// Logistic CDF, stable for large `|t|`.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
pub fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Per-observation loss `g(y, t) = -log f(y | t)` and its derivatives in `t`.
pub trait GlmFamily: Send + Sync {
    fn name(&self) -> &'static str;
    fn g(&self, y: f64, t: f64) -> f64;
    fn gdot(&self, y: f64, t: f64) -> f64;
    fn gddot(&self, y: f64, t: f64) -> f64;
    /// Outcome values the family accepts.
    fn validate_outcome(&self, y: f64) -> bool {
        y.is_finite()
    }
    /// Linear predictor of the intercept-only fit, when it has a closed form.
    fn null_intercept(&self, _y: &[f64], _w: &[f64]) -> Option<f64> {
        None
    }
    /// Per-observation starting linear predictor for unpenalized IRLS.
    fn start_linear_predictor(&self, _y: f64, _w: f64) -> f64 {
        0.0
    }
}

/// Bernoulli outcome with logit link.
#[derive(Clone, Copy, Debug, Default)]
pub struct Logit;

impl GlmFamily for Logit {
    fn name(&self) -> &'static str {
        "logit"
    }

    fn g(&self, y: f64, t: f64) -> f64 {
        log1p_exp(t) - y * t
    }

    fn gdot(&self, y: f64, t: f64) -> f64 {
        logistic(t) - y
    }

    fn gddot(&self, _y: f64, t: f64) -> f64 {
        let p = logistic(t);
        p * (1.0 - p)
    }

    fn validate_outcome(&self, y: f64) -> bool {
        y == 0.0 || y == 1.0
    }

    /// `logit((w y + 1/2) / (w + 1))`, the customary binomial starting value.
    fn start_linear_predictor(&self, y: f64, w: f64) -> f64 {
        let mu = (w * y + 0.5) / (w + 1.0);
        (mu / (1.0 - mu)).ln()
    }

    fn null_intercept(&self, y: &[f64], w: &[f64]) -> Option<f64> {
        let sw: f64 = w.iter().sum();
        let swy: f64 = y.iter().zip(w).map(|(y, w)| y * w).sum();
        let m = swy / sw;
        if m > 0.0 && m < 1.0 {
            Some((m / (1.0 - m)).ln())
        } else {
            None
        }
    }
}

/// Outcomes, design (intercept in column 0) and positive survey weights.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub w: DVector<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, w: DVector<f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || x.ncols() == 0 {
            return Err(Error::Argument("design matrix is empty".into()));
        }
        if y.len() != n || w.len() != n {
            return Err(Error::Argument(format!(
                "length mismatch: {} rows in X, {} outcomes, {} weights",
                n,
                y.len(),
                w.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| x[(i, 0)] != 1.0) {
            return Err(Error::Argument(format!(
                "design column 0 must be the intercept (row {i} is {})",
                x[(i, 0)]
            )));
        }
        if let Some(i) = w.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Argument(format!(
                "weight {i} is not strictly positive: {}",
                w[i]
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Argument("non-finite value in data".into()));
        }
        Ok(Self { y, x, w })
    }

    /// Build from covariate rows without the intercept column.
    pub fn from_covariates(y: Vec<f64>, covariates: &[Vec<f64>], w: Vec<f64>) -> Result<Self> {
        let n = y.len();
        let p = covariates.first().map_or(0, |r| r.len());
        if covariates.len() != n {
            return Err(Error::Argument("covariate row count differs from outcome length".into()));
        }
        if covariates.iter().any(|r| r.len() != p) {
            return Err(Error::Argument("ragged covariate rows".into()));
        }
        let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { covariates[i][j - 1] });
        Self::new(DVector::from_vec(y), x, DVector::from_vec(w))
    }

    pub fn unweighted(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, x, DVector::from_element(n, 1.0))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of non-constant regressors.
    pub fn p(&self) -> usize {
        self.x.ncols() - 1
    }

    pub fn weight_sum(&self) -> f64 {
        self.w.sum()
    }

    /// Copy with weights rescaled to sum to `n`.
    pub fn rescaled(&self) -> Dataset {
        let c = self.n() as f64 / self.weight_sum();
        Dataset {
            y: self.y.clone(),
            x: self.x.clone(),
            w: &self.w * c,
        }
    }

    /// Borrow when the weights already sum to `n`, otherwise rescale.
    pub fn normalized(&self) -> Cow<'_, Dataset> {
        let n = self.n() as f64;
        if (self.weight_sum() - n).abs() <= 1e-12 * n {
            Cow::Borrowed(self)
        } else {
            Cow::Owned(self.rescaled())
        }
    }

    pub fn check_outcomes(&self, fam: &dyn GlmFamily) -> Result<()> {
        match self.y.iter().position(|&v| !fam.validate_outcome(v)) {
            Some(i) => Err(Error::Data(format!(
                "outcome {} at row {i} is not valid for the {} family",
                self.y[i],
                fam.name()
            ))),
            None => Ok(()),
        }
    }

    /// Row subset, keeping weights as given.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let k = self.x.ncols();
        Dataset {
            y: DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]),
            x: DMatrix::from_fn(rows.len(), k, |i, j| self.x[(rows[i], j)]),
            w: DVector::from_fn(rows.len(), |i, _| self.w[rows[i]]),
        }
    }

    /// Linear predictor `Xθ`.
    pub fn linear_predictor(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(theta)?;
        Ok(&self.x * theta)
    }

    pub(crate) fn check_dim(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.x.ncols() {
            return Err(Error::Argument(format!(
                "parameter has length {}, design has {} columns",
                theta.len(),
                self.x.ncols()
            )));
        }
        Ok(())
    }
}

/// Score, negative Hessian and information at one parameter value.
#[derive(Clone, Debug)]
pub struct CurvatureSet {
    pub score: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub info: DMatrix<f64>,
    pub theta: DVector<f64>,
}

/// `L(θ) = -n⁻¹ Σ wᵢ g(yᵢ, xᵢ'θ)`.
pub fn weighted_loglik(ds: &Dataset, fam: &dyn GlmFamily, theta: &DVector<f64>) -> Result<f64> {
    let eta = ds.linear_predictor(theta)?;
    let n = ds.n() as f64;
    let total: f64 = (0..ds.n())
        .map(|i| ds.w[i] * fam.g(ds.y[i], eta[i]))
        .sum();
    let v = -total / n;
    if !v.is_finite() {
        return Err(Error::Numeric("weighted log-likelihood is not finite".into()));
    }
    Ok(v)
}

/// Score vector only; cheaper than [`curvature`].
pub fn score(ds: &Dataset, fam: &dyn GlmFamily, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let eta = ds.linear_predictor(theta)?;
    let n = ds.n() as f64;
    let r = DVector::from_fn(ds.n(), |i, _| -ds.w[i] * fam.gdot(ds.y[i], eta[i]) / n);
    Ok(ds.x.tr_mul(&r))
}

pub fn curvature(ds: &Dataset, fam: &dyn GlmFamily, theta: &DVector<f64>) -> Result<CurvatureSet> {
    let eta = ds.linear_predictor(theta)?;
    let n = ds.n();
    let nf = n as f64;
    let mut r = DVector::zeros(n);
    let mut hx = ds.x.clone();
    let mut ix = ds.x.clone();
    for i in 0..n {
        let gd = fam.gdot(ds.y[i], eta[i]);
        let gdd = fam.gddot(ds.y[i], eta[i]);
        let w = ds.w[i];
        r[i] = -w * gd / nf;
        let hs = w * gdd / nf;
        let is = w * w * gd * gd / nf;
        hx.row_mut(i).scale_mut(hs);
        ix.row_mut(i).scale_mut(is);
    }
    let score = ds.x.tr_mul(&r);
    let mut hessian = ds.x.tr_mul(&hx);
    let mut info = ds.x.tr_mul(&ix);
    crate::linalg::symmetrize(&mut hessian);
    crate::linalg::symmetrize(&mut info);
    if score.iter().chain(hessian.iter()).chain(info.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite curvature".into()));
    }
    Ok(CurvatureSet {
        score,
        hessian,
        info,
        theta: theta.clone(),
    })
}

/// Block views of a [`CurvatureSet`] for a selected index set `M ∋ 0`.
#[derive(Clone, Debug)]
pub struct ModelPartition {
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
    pub s_m: DVector<f64>,
    pub s_out: DVector<f64>,
    pub h_m: DMatrix<f64>,
    pub h_m_out: DMatrix<f64>,
    pub h_out_m: DMatrix<f64>,
    pub h_out: DMatrix<f64>,
    pub i_m: DMatrix<f64>,
    pub i_m_out: DMatrix<f64>,
    pub i_out_m: DMatrix<f64>,
    pub i_out: DMatrix<f64>,
}

pub fn partition(cs: &CurvatureSet, active: &[usize]) -> Result<ModelPartition> {
    let k = cs.score.len();
    let mut m: Vec<usize> = active.to_vec();
    m.sort_unstable();
    m.dedup();
    if m.first() != Some(&0) {
        return Err(Error::Argument("index set must contain the intercept (0)".into()));
    }
    if m.iter().any(|&j| j >= k) {
        return Err(Error::Argument(format!("index out of range for {k} parameters")));
    }
    let out: Vec<usize> = (0..k).filter(|j| m.binary_search(j).is_err()).collect();
    Ok(ModelPartition {
        s_m: subvector(&cs.score, &m),
        s_out: subvector(&cs.score, &out),
        h_m: submatrix(&cs.hessian, &m, &m),
        h_m_out: submatrix(&cs.hessian, &m, &out),
        h_out_m: submatrix(&cs.hessian, &out, &m),
        h_out: submatrix(&cs.hessian, &out, &out),
        i_m: submatrix(&cs.info, &m, &m),
        i_m_out: submatrix(&cs.info, &m, &out),
        i_out_m: submatrix(&cs.info, &out, &m),
        i_out: submatrix(&cs.info, &out, &out),
        active: m,
        inactive: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p + 1, |_, j| if j == 0 { 1.0 } else { rng.gen_range(-1.5..1.5) });
        let y = DVector::from_fn(n, |_, _| if rng.gen_bool(0.4) { 1.0 } else { 0.0 });
        let w = DVector::from_fn(n, |_, _| rng.gen_range(0.2..2.0));
        Dataset::new(y, x, w).unwrap()
    }

    fn random_theta(k: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn loglik_at_zero_is_minus_log2() {
        let ds = Dataset::unweighted(
            DVector::from_vec(vec![1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(3, 2, &[1.0, 0.3, 1.0, -2.0, 1.0, 0.7]),
        )
        .unwrap();
        let l = weighted_loglik(&ds, &Logit, &DVector::zeros(2)).unwrap();
        assert!((l + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn single_point_weighted() {
        let ds = Dataset::new(
            DVector::from_vec(vec![1.0]),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_vec(vec![2.0]),
        )
        .unwrap();
        let l = weighted_loglik(&ds, &Logit, &DVector::zeros(1)).unwrap();
        assert!((l + 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!((l + 1.386294).abs() < 1e-6);
    }

    #[test]
    fn loglik_matches_straight_loop() {
        let ds = random_dataset(5, 2, 3);
        let th = random_theta(3, 4);
        let mut acc = 0.0;
        for i in 0..5 {
            let mut t = 0.0;
            for j in 0..3 {
                t += ds.x[(i, j)] * th[j];
            }
            let prob = 1.0 / (1.0 + (-t).exp());
            let ll = ds.y[i] * prob.ln() + (1.0 - ds.y[i]) * (1.0 - prob).ln();
            acc += ds.w[i] * ll;
        }
        let oracle = acc / 5.0;
        let got = weighted_loglik(&ds, &Logit, &th).unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
    }

    #[test]
    fn score_at_zero_is_centered_outcome() {
        let ds = random_dataset(30, 3, 11);
        let cs = curvature(&ds, &Logit, &DVector::zeros(4)).unwrap();
        for j in 0..4 {
            let want: f64 = (0..30)
                .map(|i| ds.w[i] * ds.x[(i, j)] * (ds.y[i] - 0.5))
                .sum::<f64>()
                / 30.0;
            assert!((cs.score[j] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn score_and_hessian_match_finite_differences() {
        for seed in 0..5 {
            let ds = random_dataset(40, 3, seed);
            let th = random_theta(4, seed + 100);
            let cs = curvature(&ds, &Logit, &th).unwrap();
            let h = 1e-5;
            for j in 0..4 {
                let mut tp = th.clone();
                let mut tm = th.clone();
                tp[j] += h;
                tm[j] -= h;
                let fd = (weighted_loglik(&ds, &Logit, &tp).unwrap()
                    - weighted_loglik(&ds, &Logit, &tm).unwrap())
                    / (2.0 * h);
                assert!((fd - cs.score[j]).abs() <= 1e-6 * cs.score[j].abs().max(1e-3));
                let sp = score(&ds, &Logit, &tp).unwrap();
                let sm = score(&ds, &Logit, &tm).unwrap();
                for k in 0..4 {
                    let fdh = -(sp[k] - sm[k]) / (2.0 * h);
                    assert!((fdh - cs.hessian[(k, j)]).abs() <= 1e-6 * cs.hessian[(k, j)].abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn curvature_symmetric_and_psd() {
        let ds = random_dataset(25, 4, 7);
        let cs = curvature(&ds, &Logit, &random_theta(5, 8)).unwrap();
        assert_eq!(cs.hessian, cs.hessian.transpose());
        assert_eq!(cs.info, cs.info.transpose());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let v = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
            assert!((v.transpose() * &cs.info * &v)[0] >= 0.0);
            assert!((v.transpose() * &cs.hessian * &v)[0] >= 0.0);
        }
    }

    #[test]
    fn weight_scaling() {
        let ds = random_dataset(20, 2, 21);
        let th = random_theta(3, 22);
        let mut ds2 = ds.clone();
        ds2.w *= 4.0;
        let a = curvature(&ds, &Logit, &th).unwrap();
        let b = curvature(&ds2, &Logit, &th).unwrap();
        let la = weighted_loglik(&ds, &Logit, &th).unwrap();
        let lb = weighted_loglik(&ds2, &Logit, &th).unwrap();
        // powers of two keep the scaling exact in floating point
        assert_eq!(lb, 4.0 * la);
        assert_eq!(b.score, &a.score * 4.0);
        assert_eq!(b.hessian, &a.hessian * 4.0);
        assert_eq!(b.info, &a.info * 16.0);
    }

    #[test]
    fn logit_pointwise_bounds_and_overflow() {
        for &t in &[-800.0, -40.0, -1.0, 0.0, 2.5, 40.0, 800.0] {
            for &y in &[0.0, 1.0] {
                let g = Logit.g(y, t);
                let gdd = Logit.gddot(y, t);
                assert!(g >= 0.0 && g.is_finite());
                assert!((0.0..=0.25).contains(&gdd));
            }
            assert!(logistic(t).is_finite());
        }
        assert_eq!(logistic(800.0), 1.0);
        assert_eq!(logistic(-800.0), 0.0);
        assert_eq!(Logit.gddot(0.0, 0.0), 0.25);
    }

    #[test]
    fn partition_blocks() {
        let ds = random_dataset(30, 6, 5);
        let cs = curvature(&ds, &Logit, &random_theta(7, 6)).unwrap();
        let full = partition(&cs, &(0..7).collect::<Vec<_>>()).unwrap();
        assert_eq!(full.h_m, cs.hessian);
        assert!(full.inactive.is_empty());
        let only = partition(&cs, &[0]).unwrap();
        assert_eq!(only.h_m[(0, 0)], cs.hessian[(0, 0)]);
        let m = [0usize, 2, 5];
        let pt = partition(&cs, &m).unwrap();
        assert_eq!(pt.inactive, vec![1, 3, 4, 6]);
        for (a, &i) in m.iter().enumerate() {
            for (b, &j) in pt.inactive.iter().enumerate() {
                assert_eq!(pt.h_m_out[(a, b)], cs.hessian[(i, j)]);
                assert_eq!(pt.h_out_m[(b, a)], cs.hessian[(j, i)]);
                assert_eq!(pt.i_m_out[(a, b)], cs.info[(i, j)]);
            }
            assert_eq!(pt.s_m[a], cs.score[i]);
        }
        assert!(matches!(partition(&cs, &[1, 2]), Err(Error::Argument(_))));
    }

    #[test]
    fn dataset_validation() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        assert!(Dataset::new(y.clone(), x.clone(), DVector::from_vec(vec![1.0, 0.0])).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
        assert!(Dataset::new(y.clone(), bad, DVector::from_vec(vec![1.0, 1.0])).is_err());
        assert!(Dataset::new(y, x.clone(), DVector::from_vec(vec![1.0])).is_err());
        let ds = Dataset::new(DVector::from_vec(vec![0.0, 2.0]), x, DVector::from_vec(vec![1.0, 3.0])).unwrap();
        assert!(ds.check_outcomes(&Logit).is_err());
        assert!((ds.rescaled().weight_sum() - 2.0).abs() < 1e-15);
    }
}
