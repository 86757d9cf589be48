//! Average marginal effects of binary regressors in the logit model.
//!
//! For regressor `j` the marginal effect of observation `i` is the change in
//! `Λ(xᵢ'θ)` when `x_ij` is switched from 0 to 1 with everything else held
//! fixed, and the AME is the weighted mean of those changes. Only column `j` is
//! substituted, so designs with interaction columns need their own target.

use nalgebra::{DMatrix, DVector};

use crate::calpha::{auxiliary_ame_solve, c_alpha_test};
use crate::debiased::db_wald;
use crate::error::{Error, Result};
use crate::glm::{logistic, Dataset, GlmFamily};
use crate::lasso::LassoFit;
use crate::param::ParamFn;
use crate::result::{InferenceResult, Method};
use crate::selective::{augment_for_rho, build_selection_event, si_ci_rho, SelectionEvent};

pub fn check_binary_column(ds: &Dataset, j: usize) -> Result<()> {
    if j == 0 || j >= ds.x.ncols() {
        return Err(Error::Argument(format!(
            "marginal effects need a regressor index in 1..={}, got {j}",
            ds.p()
        )));
    }
    if let Some(i) = ds.x.column(j).iter().position(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::Argument(format!(
            "column {j} is not binary (row {i} has value {})",
            ds.x[(i, j)]
        )));
    }
    Ok(())
}

/// Linear predictors with `x_ij` set to 1 and to 0.
fn counterfactual_predictors(ds: &Dataset, theta: &DVector<f64>, j: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    let eta = ds.linear_predictor(theta)?;
    let tj = theta[j];
    let base = DVector::from_fn(ds.n(), |i, _| eta[i] - ds.x[(i, j)] * tj);
    let on = base.add_scalar(tj);
    Ok((on, base))
}

/// `(Σw)⁻¹ Σ wᵢ [Λ(xᵢ'θ | x_ij = 1) − Λ(xᵢ'θ | x_ij = 0)]`.
pub fn ame_estimate(ds: &Dataset, theta: &DVector<f64>, j: usize) -> Result<f64> {
    check_binary_column(ds, j)?;
    let (on, off) = counterfactual_predictors(ds, theta, j)?;
    let sw = ds.weight_sum();
    Ok((0..ds.n())
        .map(|i| ds.w[i] * (logistic(on[i]) - logistic(off[i])))
        .sum::<f64>()
        / sw)
}

/// Gradient of [`ame_estimate`] with respect to `θ`: the weighted mean of
/// `xᵢ Λ(1 − Λ)` at the two counterfactual rows, differenced.
pub fn ame_jacobian(ds: &Dataset, theta: &DVector<f64>, j: usize) -> Result<DVector<f64>> {
    check_binary_column(ds, j)?;
    let (on, off) = counterfactual_predictors(ds, theta, j)?;
    let k = ds.x.ncols();
    let mut grad = DVector::zeros(k);
    for i in 0..ds.n() {
        let p1 = logistic(on[i]);
        let p0 = logistic(off[i]);
        let d1 = ds.w[i] * p1 * (1.0 - p1);
        let d0 = ds.w[i] * p0 * (1.0 - p0);
        for c in 0..k {
            let (x1, x0) = if c == j { (1.0, 0.0) } else { (ds.x[(i, c)], ds.x[(i, c)]) };
            grad[c] += x1 * d1 - x0 * d0;
        }
    }
    Ok(grad / ds.weight_sum())
}

/// AME of regressor `j` as a [`ParamFn`].
#[derive(Clone, Copy, Debug)]
pub struct Ame(pub usize);

impl ParamFn for Ame {
    fn dim(&self) -> usize {
        1
    }

    fn describe(&self) -> String {
        format!("AME[{}]", self.0)
    }

    fn value(&self, ds: &Dataset, theta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, ame_estimate(ds, theta, self.0)?))
    }

    fn jacobian(&self, ds: &Dataset, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let g = ame_jacobian(ds, theta, self.0)?;
        Ok(DMatrix::from_column_slice(g.len(), 1, g.as_slice()))
    }
}

/// Selective inference for the AME of `j` in the selected model, reusing a
/// prebuilt selection event. `condition_on_sign` selects SI over SI2.
pub fn ame_si(
    ds: &Dataset,
    ev: &SelectionEvent,
    theta_hat: &DVector<f64>,
    j: usize,
    condition_on_sign: bool,
    null: f64,
    zeta: f64,
) -> Result<InferenceResult> {
    if ev.slope_position(j).is_none() {
        return Err(Error::NotApplicable(format!("regressor {j} is not in the selected model")));
    }
    let rho_hat = ame_estimate(ds, theta_hat, j)?;
    let full = ame_jacobian(ds, theta_hat, j)?;
    let grad_m = DVector::from_fn(ev.active.len(), |i, _| full[ev.active[i]]);
    let aug = augment_for_rho(ev, rho_hat, &grad_m, condition_on_sign)?;
    let mut r = si_ci_rho(&aug, null, zeta)?;
    r.target = format!("AME[{j}] | selected model");
    Ok(r)
}

/// Inference on `AME_j` by one of the Lasso-based methods.
pub fn ame_infer(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    fit: &LassoFit,
    j: usize,
    method: Method,
    null: f64,
    zeta: f64,
) -> Result<InferenceResult> {
    check_binary_column(ds, j)?;
    match method {
        Method::DB => db_wald(ds, fam, fit, &Ame(j), null, zeta),
        Method::SI | Method::SI2 => {
            if !fit.is_active(j) {
                return Err(Error::NotApplicable(format!("regressor {j} is not in the selected model")));
            }
            let ev = build_selection_event(ds, fam, fit)?;
            ame_si(ds, &ev, &fit.theta, j, method == Method::SI, null, zeta)
        }
        Method::CAlpha => {
            let aux = auxiliary_ame_solve(ds, fit, j, null)?;
            c_alpha_test(ds, fam, &aux, &Ame(j), null, zeta)
        }
        Method::TSvy => Err(Error::Argument(
            "the survey t test uses the unpenalized fit; call tsvy_wald".into(),
        )),
    }
}
