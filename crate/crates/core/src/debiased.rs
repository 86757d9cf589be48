//! Debiased (one-step) Lasso inference and the unpenalized survey-weighted
//! GLM baseline.
//!
//! Both use the sandwich `Ĥ⁻¹ Î Ĥ⁻¹` for the variance of `n^{1/2}(θ̃ − θ₀)`.
//! The debiased estimate is `θ̃ = θ̂ + Ĥ(θ̂)⁻¹ S(θ̂)` and a smooth target is
//! debiased the same way, `ρ̃ = ρ(θ̂) + ρ̇(θ̂)' Ĥ⁻¹ S`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::error::{Error, Result};
use crate::glm::{curvature, CurvatureSet, Dataset, GlmFamily};
use crate::lasso::LassoFit;
use crate::linalg::SpdFactor;
use crate::param::ParamFn;
use crate::result::{InferenceResult, Method};
use crate::stats::{chi2_sf, normal_quantile, normal_two_sided, student_t};

fn factor_hessian(cs: &CurvatureSet) -> Result<SpdFactor> {
    SpdFactor::new(&cs.hessian, "H").map_err(|e| match e {
        Error::Singular { .. } => Error::Numeric(
            "the negative Hessian is singular at the Lasso estimate; \
             increase lambda or reduce the number of regressors"
                .into(),
        ),
        other => other,
    })
}

/// Curvature at a point plus the factorized Hessian.
struct Sandwich {
    n: usize,
    cs: CurvatureSet,
    h: SpdFactor,
}

impl Sandwich {
    fn at(ds: &Dataset, fam: &dyn GlmFamily, theta: &DVector<f64>) -> Result<Self> {
        ds.check_dim(theta)?;
        let ds = ds.normalized();
        let cs = curvature(&ds, fam, theta)?;
        let h = factor_hessian(&cs)?;
        Ok(Self { n: ds.n(), cs, h })
    }

    /// `Ĥ⁻¹ S`
    fn newton_step(&self) -> DVector<f64> {
        self.h.solve_vec(&self.cs.score)
    }

    /// `ρ̇' Ĥ⁻¹ Î Ĥ⁻¹ ρ̇`
    fn variance(&self, jac: &DMatrix<f64>) -> DMatrix<f64> {
        let g = self.h.solve_mat(jac);
        let mut v = g.transpose() * &self.cs.info * &g;
        crate::linalg::symmetrize(&mut v);
        v
    }
}

/// One Newton step from an arbitrary point, `θ + Ĥ(θ)⁻¹ S(θ)`.
pub fn one_step_from(ds: &Dataset, fam: &dyn GlmFamily, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let sw = Sandwich::at(ds, fam, theta)?;
    Ok(theta + sw.newton_step())
}

/// `θ̃ = θ̂ + Ĥ(θ̂)⁻¹ S(θ̂)`.
pub fn db_one_step(ds: &Dataset, fam: &dyn GlmFamily, fit: &LassoFit) -> Result<DVector<f64>> {
    one_step_from(ds, fam, &fit.theta)
}

/// `ρ̃ = ρ(θ̂) + ρ̇(θ̂)' Ĥ⁻¹ S(θ̂)`.
pub fn db_rho(ds: &Dataset, fam: &dyn GlmFamily, fit: &LassoFit, rho: &dyn ParamFn) -> Result<DVector<f64>> {
    let sw = Sandwich::at(ds, fam, &fit.theta)?;
    let jac = rho.jacobian(ds, &fit.theta)?;
    Ok(rho.value(ds, &fit.theta)? + jac.transpose() * sw.newton_step())
}

/// Joint Wald test `n (ρ̃ − ρ⁰)' V̂⁻¹ (ρ̃ − ρ⁰) ~ χ²_r`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JointWald {
    pub method: Method,
    pub target: String,
    pub estimate: DVector<f64>,
    /// `V̂ / n`
    pub covariance: DMatrix<f64>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

struct DebiasedTarget {
    estimate: DVector<f64>,
    /// `V̂`, the variance of `n^{1/2} ρ̃`
    v: DMatrix<f64>,
    n: usize,
}

fn debiased_target(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    fit: &LassoFit,
    rho: &dyn ParamFn,
) -> Result<DebiasedTarget> {
    let sw = Sandwich::at(ds, fam, &fit.theta)?;
    let jac = rho.jacobian(ds, &fit.theta)?;
    let estimate = rho.value(ds, &fit.theta)? + jac.transpose() * sw.newton_step();
    Ok(DebiasedTarget {
        estimate,
        v: sw.variance(&jac),
        n: sw.n,
    })
}

fn quadratic_form(v: &DMatrix<f64>, d: &DVector<f64>, n: usize) -> Result<f64> {
    let f = SpdFactor::new(v, "V").map_err(|_| {
        Error::Numeric("variance of the target is not positive definite".into())
    })?;
    Ok(n as f64 * d.dot(&f.solve_vec(d)))
}

/// Scalar Wald test of `H₀: ρ(θ₀) = null` with a normal reference.
pub fn db_wald(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    fit: &LassoFit,
    rho: &dyn ParamFn,
    null: f64,
    zeta: f64,
) -> Result<InferenceResult> {
    check_zeta(zeta)?;
    if rho.dim() != 1 {
        return Err(Error::Argument(format!(
            "scalar Wald test needs a one-dimensional target, got dimension {}",
            rho.dim()
        )));
    }
    let t = debiased_target(ds, fam, fit, rho)?;
    let v = t.v[(0, 0)];
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Numeric(format!("variance of the target is {v:.3e}")));
    }
    let est = t.estimate[0];
    let se = (v / t.n as f64).sqrt();
    let stat = (est - null) / se;
    let q = normal_quantile(1.0 - zeta / 2.0);
    Ok(InferenceResult {
        method: Method::DB,
        target: rho.describe(),
        estimate: est,
        std_error: se,
        statistic: stat,
        df: None,
        null_value: null,
        p_value: normal_two_sided(stat),
        ci: (est - q * se, est + q * se),
        zeta,
        truncation: None,
        pseudo_inverse_used: false,
    })
}

/// Joint Wald test of `H₀: ρ(θ₀) = null` with `r = dim ρ` degrees of freedom.
pub fn db_wald_joint(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    fit: &LassoFit,
    rho: &dyn ParamFn,
    null: &DVector<f64>,
) -> Result<JointWald> {
    if null.len() != rho.dim() {
        return Err(Error::Argument("null value has the wrong dimension".into()));
    }
    let t = debiased_target(ds, fam, fit, rho)?;
    let d = &t.estimate - null;
    let stat = quadratic_form(&t.v, &d, t.n)?;
    Ok(JointWald {
        method: Method::DB,
        target: rho.describe(),
        covariance: &t.v / t.n as f64,
        estimate: t.estimate,
        statistic: stat,
        df: rho.dim(),
        p_value: chi2_sf(stat, rho.dim())?,
    })
}

fn check_zeta(zeta: f64) -> Result<()> {
    if zeta > 0.0 && zeta < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("level zeta must be in (0,1), got {zeta}")))
    }
}

/// Unpenalized weighted GLM fit by iteratively reweighted least squares.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurveyGlmFit {
    pub theta: DVector<f64>,
    pub deviance: f64,
    pub iterations: usize,
    /// False when the deviance criterion was not met within the iteration
    /// budget; the last iterate is still returned, as standard GLM software does.
    pub converged: bool,
}

const IRLS_MAX_ITER: usize = 25;
const IRLS_TOL: f64 = 1e-8;
const IRLS_WEIGHT_FLOOR: f64 = f64::EPSILON;

fn deviance(ds: &Dataset, fam: &dyn GlmFamily, eta: &DVector<f64>) -> f64 {
    2.0 * (0..ds.n()).map(|i| ds.w[i] * fam.g(ds.y[i], eta[i])).sum::<f64>()
}

/// Fit the survey-weighted GLM without penalty (weights rescaled to sum to n).
///
/// Starts from the family's customary per-observation linear predictor and
/// stops when `|dev − dev_old| / (|dev| + 0.1) < 1e-8` or after 25 iterations.
pub fn survey_glm(ds: &Dataset, fam: &dyn GlmFamily) -> Result<SurveyGlmFit> {
    ds.check_outcomes(fam)?;
    let ds = ds.normalized();
    let (n, k) = (ds.n(), ds.x.ncols());
    if n <= k {
        return Err(Error::Data(format!(
            "unpenalized fit needs more observations ({n}) than parameters ({k})"
        )));
    }
    let mut eta = DVector::from_fn(n, |i, _| fam.start_linear_predictor(ds.y[i], ds.w[i]));
    let mut dev_old = deviance(&ds, fam, &eta);
    let mut theta: Option<DVector<f64>> = None;
    for iter in 1..=IRLS_MAX_ITER {
        let mut wx = ds.x.clone();
        let mut wz = DVector::zeros(n);
        for i in 0..n {
            let h = fam.gddot(ds.y[i], eta[i]).max(IRLS_WEIGHT_FLOOR);
            let wi = ds.w[i] * h;
            let zi = eta[i] - fam.gdot(ds.y[i], eta[i]) / h;
            wx.row_mut(i).scale_mut(wi);
            wz[i] = wi * zi;
        }
        let xtwx = ds.x.tr_mul(&wx);
        let rhs = ds.x.tr_mul(&wz);
        let fac = SpdFactor::new(&xtwx, "X'WX").map_err(|_| {
            Error::Numeric(format!("weighted design is rank deficient at IRLS iteration {iter}"))
        })?;
        let mut next = fac.solve_vec(&rhs);
        let mut new_eta = &ds.x * &next;
        let mut dev = deviance(&ds, fam, &new_eta);
        // step halving when the deviance blows up
        let mut halvings = 0;
        while !dev.is_finite() {
            let prev = theta.as_ref().ok_or_else(|| {
                Error::Numeric("non-finite deviance at the first IRLS iteration".into())
            })?;
            halvings += 1;
            if halvings > 30 {
                return Err(Error::Numeric("IRLS step halving failed".into()));
            }
            next = (&next + prev) * 0.5;
            new_eta = &ds.x * &next;
            dev = deviance(&ds, fam, &new_eta);
        }
        eta = new_eta;
        theta = Some(next);
        if (dev - dev_old).abs() / (dev.abs() + 0.1) < IRLS_TOL {
            return Ok(SurveyGlmFit {
                theta: theta.unwrap(),
                deviance: dev,
                iterations: iter,
                converged: true,
            });
        }
        dev_old = dev;
    }
    Ok(SurveyGlmFit {
        theta: theta.expect("at least one iteration"),
        deviance: dev_old,
        iterations: IRLS_MAX_ITER,
        converged: false,
    })
}

/// Survey t test of `H₀: ρ(θ₀) = null` from the unpenalized fit, using the
/// delta method with sandwich variance and `n − p − 1` degrees of freedom.
pub fn tsvy_wald(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    glm: &SurveyGlmFit,
    rho: &dyn ParamFn,
    null: f64,
    zeta: f64,
) -> Result<InferenceResult> {
    check_zeta(zeta)?;
    if rho.dim() != 1 {
        return Err(Error::Argument("survey t test needs a scalar target".into()));
    }
    let sw = Sandwich::at(ds, fam, &glm.theta)?;
    let jac = rho.jacobian(ds, &glm.theta)?;
    let v = sw.variance(&jac)[(0, 0)];
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Numeric(format!("variance of the target is {v:.3e}")));
    }
    let n = sw.n;
    let df = n as f64 - glm.theta.len() as f64;
    let t_dist = student_t(df)?;
    let est = rho.value(ds, &glm.theta)?[0];
    let se = (v / n as f64).sqrt();
    let stat = (est - null) / se;
    let q = t_dist.inverse_cdf(1.0 - zeta / 2.0);
    let p = if stat.is_finite() { 2.0 * t_dist.sf(stat.abs()) } else { 0.0 };
    Ok(InferenceResult {
        method: Method::TSvy,
        target: rho.describe(),
        estimate: est,
        std_error: se,
        statistic: stat,
        df: Some(df),
        null_value: null,
        p_value: p.clamp(0.0, 1.0),
        ci: (est - q * se, est + q * se),
        zeta,
        truncation: None,
        pseudo_inverse_used: false,
    })
}
