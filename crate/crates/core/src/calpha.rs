//! C(α) tests: the score at a restricted auxiliary estimate `θ̃*`, projected
//! onto the tested directions and studentized with the sandwich.
//!
//! `C = n S' Ĥ⁻¹ ρ̇ (ρ̇' Ĥ⁻¹ Î Ĥ⁻¹ ρ̇)⁻¹ ρ̇' Ĥ⁻¹ S`, everything at `θ̃*`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::ame::{ame_estimate, check_binary_column};
use crate::error::{Error, Result};
use crate::glm::{curvature, Dataset, GlmFamily};
use crate::lasso::LassoFit;
use crate::linalg::{submatrix, subvector, SpdFactor, SymSolver};
use crate::param::ParamFn;
use crate::result::{InferenceResult, Method};
use crate::stats::chi2_sf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuxiliaryKind {
    /// Coordinate set to the null value, others refined by one restricted Newton step.
    CoordinatePin,
    /// Coordinate replaced by the null value, others left at the Lasso estimate.
    CoordinateReplace,
    /// Own coefficient solved so that the AME equals the null value.
    AmeSolve,
    Custom,
}

/// A parameter value satisfying the null restriction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuxiliaryEstimate {
    pub theta: DVector<f64>,
    pub kind: AuxiliaryKind,
    pub pseudo_inverse_used: bool,
}

impl AuxiliaryEstimate {
    /// Caller-supplied restricted estimate for targets without a built-in construction.
    pub fn custom(theta: DVector<f64>) -> Self {
        Self {
            theta,
            kind: AuxiliaryKind::Custom,
            pseudo_inverse_used: false,
        }
    }
}

/// `θ̂` with coordinate `j` replaced by `value`.
pub fn auxiliary_coordinate_replace(fit: &LassoFit, j: usize, value: f64) -> Result<AuxiliaryEstimate> {
    if j >= fit.theta.len() {
        return Err(Error::Argument(format!("coordinate {j} out of range")));
    }
    let mut theta = fit.theta.clone();
    theta[j] = value;
    Ok(AuxiliaryEstimate {
        theta,
        kind: AuxiliaryKind::CoordinateReplace,
        pseudo_inverse_used: false,
    })
}

/// Pin `θ_j = value`, then take one Newton step in the remaining coordinates
/// with `θ_j` held fixed. A singular restricted Hessian falls back to the
/// pseudo-inverse and sets the flag.
pub fn auxiliary_coordinate_pin(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    fit: &LassoFit,
    j: usize,
    value: f64,
) -> Result<AuxiliaryEstimate> {
    let mut aux = auxiliary_coordinate_replace(fit, j, value)?;
    let ds = ds.normalized();
    let cs = curvature(&ds, fam, &aux.theta)?;
    let rest: Vec<usize> = (0..aux.theta.len()).filter(|&k| k != j).collect();
    if rest.is_empty() {
        aux.kind = AuxiliaryKind::CoordinatePin;
        return Ok(aux);
    }
    let h = submatrix(&cs.hessian, &rest, &rest);
    let solver = SymSolver::with_fallback(&h, "restricted H")?;
    let step = solver.solve_vec(&subvector(&cs.score, &rest));
    for (k, &idx) in rest.iter().enumerate() {
        aux.theta[idx] += step[k];
    }
    aux.kind = AuxiliaryKind::CoordinatePin;
    aux.pseudo_inverse_used = solver.is_pseudo();
    Ok(aux)
}

const AME_BRACKET: f64 = 50.0;
const AME_TOL: f64 = 1e-10;

/// Solve `AME_j(θ) = target` for `θ_j`, holding `θ̂_{-j}` fixed.
pub fn auxiliary_ame_solve(ds: &Dataset, fit: &LassoFit, j: usize, target: f64) -> Result<AuxiliaryEstimate> {
    check_binary_column(ds, j)?;
    let mut theta = fit.theta.clone();
    let mut f = |t: f64| -> Result<f64> {
        theta[j] = t;
        Ok(ame_estimate(ds, &theta, j)? - target)
    };
    if target == 0.0 {
        // AME_j vanishes exactly at θ_j = 0
        f(0.0)?;
    } else {
        let (mut lo, mut hi) = (-AME_BRACKET, AME_BRACKET);
        let (flo, fhi) = (f(lo)?, f(hi)?);
        if flo > 0.0 || fhi < 0.0 {
            return Err(Error::Infeasible(format!(
                "no coefficient in [-{AME_BRACKET}, {AME_BRACKET}] gives AME {target}"
            )));
        }
        // AME is strictly increasing in θ_j for the logit
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = f(mid)?;
            if v.abs() < AME_TOL * 1e-2 || hi - lo < AME_TOL {
                lo = mid;
                hi = mid;
                break;
            }
            if v > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        f(0.5 * (lo + hi))?;
    }
    let resid = ame_estimate(ds, &theta, j)? - target;
    if resid.abs() > 1e-8 {
        return Err(Error::Infeasible(format!(
            "AME restriction residual {resid:.3e} after bisection"
        )));
    }
    Ok(AuxiliaryEstimate {
        theta,
        kind: AuxiliaryKind::AmeSolve,
        pseudo_inverse_used: false,
    })
}

/// Value of the statistic with its reference distribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CAlphaStat {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub pseudo_inverse_used: bool,
}

pub fn c_alpha_stat(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    aux: &AuxiliaryEstimate,
    rho: &dyn ParamFn,
) -> Result<CAlphaStat> {
    ds.check_dim(&aux.theta)?;
    let ds = ds.normalized();
    let cs = curvature(&ds, fam, &aux.theta)?;
    let solver = SymSolver::with_fallback(&cs.hessian, "H")?;
    let jac = rho.jacobian(&ds, &aux.theta)?;
    let g = solver.solve_mat(&jac); // Ĥ⁻¹ ρ̇
    let proj = g.transpose() * &cs.score; // ρ̇' Ĥ⁻¹ S
    let mut v = g.transpose() * &cs.info * &g;
    crate::linalg::symmetrize(&mut v);
    let inner = SpdFactor::new(&v, "rho' H^-1 I H^-1 rho").map_err(|_| {
        Error::Numeric("the projected score variance is singular".into())
    })?;
    let stat = ds.n() as f64 * proj.dot(&inner.solve_vec(&proj));
    let df = rho.dim();
    Ok(CAlphaStat {
        statistic: stat,
        df,
        p_value: chi2_sf(stat, df)?,
        pseudo_inverse_used: solver.is_pseudo() || aux.pseudo_inverse_used,
    })
}

/// [`c_alpha_stat`] packaged as an [`InferenceResult`]. The test has no
/// point estimate or interval of its own, so those fields are NaN.
pub fn c_alpha_test(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    aux: &AuxiliaryEstimate,
    rho: &dyn ParamFn,
    null: f64,
    zeta: f64,
) -> Result<InferenceResult> {
    let c = c_alpha_stat(ds, fam, aux, rho)?;
    Ok(InferenceResult {
        method: Method::CAlpha,
        target: rho.describe(),
        estimate: f64::NAN,
        std_error: f64::NAN,
        statistic: c.statistic,
        df: Some(c.df as f64),
        null_value: null,
        p_value: c.p_value,
        ci: (f64::NAN, f64::NAN),
        zeta,
        truncation: None,
        pseudo_inverse_used: c.pseudo_inverse_used,
    })
}
