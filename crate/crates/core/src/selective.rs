//! Selective inference conditional on the Lasso selection event.
//!
//! Given a fit with active set `M` (intercept included) and slope signs `s`,
//! the event `{M̂ = M, ŝ = s}` is the polyhedron `{A Z ≤ b}` in
//!
//! ```text
//! Z = √n [β̃_M ; S̃_{-M}],   β̃_M = β̂_M + E H_M⁻¹ S_M,   S̃_{-M} = S_{-M} − H_{-MM} H_M⁻¹ S_M
//! ```
//!
//! where `E` drops the intercept row. Inference on `η'Z` then uses the
//! truncated-normal pivot on `[V⁻, V⁺]`. With survey weights the active and
//! inactive blocks of `Z` are correlated, so the inactive rows are always
//! part of the conditioning set.
//!
//! Penalty factors other than one (standardized fits) enter `b` coordinate by
//! coordinate: the scalar `λ` of the textbook display becomes `λ_j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{curvature, partition, Dataset, GlmFamily, ModelPartition};
use crate::lasso::LassoFit;
use crate::linalg::{symmetrize, SpdFactor};
use crate::result::{InferenceResult, Method};
use crate::truncnorm::{invert_mean, TruncatedNormal};

/// Allowed slack when checking that the realized data satisfy `A Z ≤ b`.
const EVENT_TOL: f64 = 1e-8;
/// `(Ac)_j` entries below this fraction of `max|Ac|` count as zero.
const ZERO_DIRECTION_TOL: f64 = 1e-13;

/// Curvature blocks at `θ̂` and the one-step quantities that every selective
/// construction needs.
struct SelectedBlocks {
    n: usize,
    part: ModelPartition,
    h_m_inv: DMatrix<f64>,
    /// `(0, λ_j s_j)` for the active coordinates.
    kkt_score_m: DVector<f64>,
    theta_hat_m: DVector<f64>,
}

fn selected_blocks(ds: &Dataset, fam: &dyn GlmFamily, fit: &LassoFit) -> Result<SelectedBlocks> {
    ds.check_dim(&fit.theta)?;
    let ds = ds.normalized();
    let cs = curvature(&ds, fam, &fit.theta)?;
    let part = partition(&cs, &fit.active)?;
    let h_m_inv = SpdFactor::new(&part.h_m, "H_M")?.inverse();
    let kkt_score_m = DVector::from_fn(part.active.len(), |i, _| {
        if i == 0 {
            0.0
        } else {
            fit.penalty(part.active[i]) * fit.signs[i - 1]
        }
    });
    let gap = (&part.s_m - &kkt_score_m).amax();
    let tol = fit_kkt_tol(fit);
    if gap > tol {
        return Err(Error::Consistency(format!(
            "active score differs from its KKT value by {gap:.3e} (tolerance {tol:.1e})"
        )));
    }
    let theta_hat_m = DVector::from_fn(part.active.len(), |i, _| fit.theta[part.active[i]]);
    Ok(SelectedBlocks {
        n: ds.n(),
        part,
        h_m_inv,
        kkt_score_m,
        theta_hat_m,
    })
}

fn fit_kkt_tol(fit: &LassoFit) -> f64 {
    1e-5 * fit.lambda.max(1.0)
}

/// `θ̃_M = θ̂_M + H_M⁻¹ S_M` and its slope part `β̃_M`.
pub fn one_step_selected(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    fit: &LassoFit,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let sb = selected_blocks(ds, fam, fit)?;
    let theta = &sb.theta_hat_m + &sb.h_m_inv * &sb.part.s_m;
    let beta = theta.rows(1, theta.len() - 1).into_owned();
    Ok((theta, beta))
}

/// `S̃_{-M} = S_{-M} − H_{-MM} H_M⁻¹ S_M`; empty when every coordinate is active.
pub fn decorrelated_score(ds: &Dataset, fam: &dyn GlmFamily, fit: &LassoFit) -> Result<DVector<f64>> {
    let sb = selected_blocks(ds, fam, fit)?;
    Ok(&sb.part.s_out - &sb.part.h_out_m * (&sb.h_m_inv * &sb.part.s_m))
}

/// The affine selection event `{A Z ≤ b}` with covariance estimate `Σ̂`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectionEvent {
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
    pub signs: Vec<f64>,
    pub lambda: f64,
    pub n: usize,
    pub a: DMatrix<f64>,
    pub z: DVector<f64>,
    pub b: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub theta_hat_m: DVector<f64>,
    pub theta_tilde_m: DVector<f64>,
    pub beta_tilde: DVector<f64>,
    h_m_inv: DMatrix<f64>,
    h_m_out: DMatrix<f64>,
    i_m: DMatrix<f64>,
    i_m_out: DMatrix<f64>,
    score_m: DVector<f64>,
    kkt_score_m: DVector<f64>,
}

impl SelectionEvent {
    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// Position of regressor `j` inside `β̃_M`, if it was selected.
    pub fn slope_position(&self, j: usize) -> Option<usize> {
        if j == 0 {
            return None;
        }
        self.active.binary_search(&j).ok().map(|k| k - 1)
    }

    pub fn slice(&self, eta: &DVector<f64>) -> Result<PolyhedralSlice> {
        polyhedral_slice(&self.a, &self.b, &self.z, &self.sigma, eta)
    }

    /// Largest violation of `A Z ≤ b` (negative when strictly inside).
    pub fn max_violation(&self) -> f64 {
        max_violation(&self.a, &self.z, &self.b)
    }
}

fn max_violation(a: &DMatrix<f64>, z: &DVector<f64>, b: &DVector<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    (a * z - b).max()
}

fn check_realized(a: &DMatrix<f64>, z: &DVector<f64>, b: &DVector<f64>) -> Result<()> {
    for i in 0..a.nrows() {
        let lhs = a.row(i).dot(&z.transpose());
        if lhs > b[i] + EVENT_TOL * b[i].abs().max(1.0) {
            return Err(Error::Consistency(format!(
                "selection event row {i} violated at the realized fit: {lhs:.6e} > {:.6e}",
                b[i]
            )));
        }
    }
    Ok(())
}

/// Assemble `A`, `Z`, `b` and `Σ̂` for the fit's selection event.
pub fn build_selection_event(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    fit: &LassoFit,
) -> Result<SelectionEvent> {
    if fit.active.len() < 2 {
        return Err(Error::NotApplicable(
            "no slope was selected, so there is no selected-model coefficient to test".into(),
        ));
    }
    let sb = selected_blocks(ds, fam, fit)?;
    let part = &sb.part;
    let km = part.active.len();
    let ks = km - 1;
    let ko = part.inactive.len();
    let p = ks + ko;
    let sqrt_n = (sb.n as f64).sqrt();
    let hinv = &sb.h_m_inv;

    let step = hinv * &part.s_m;
    let theta_tilde_m = &sb.theta_hat_m + &step;
    let beta_tilde = theta_tilde_m.rows(1, ks).into_owned();
    let k_mat = &part.h_out_m * hinv; // H_{-MM} H_M⁻¹
    let s_tilde = &part.s_out - &k_mat * &part.s_m;

    let mut z = DVector::zeros(p);
    z.rows_mut(0, ks).copy_from(&(&beta_tilde * sqrt_n));
    z.rows_mut(ks, ko).copy_from(&(&s_tilde * sqrt_n));

    let mut a = DMatrix::zeros(ks + 2 * ko, p);
    for i in 0..ks {
        a[(i, i)] = -fit.signs[i];
    }
    for i in 0..ko {
        a[(ks + i, ks + i)] = 1.0;
        a[(ks + ko + i, ks + i)] = -1.0;
    }

    let shift_m = hinv * &sb.kkt_score_m; // H_M⁻¹ (0, λ s)
    let shift_out = &part.h_out_m * &shift_m;
    let mut b = DVector::zeros(ks + 2 * ko);
    for i in 0..ks {
        b[i] = -fit.signs[i] * shift_m[i + 1] * sqrt_n;
    }
    for (i, &j) in part.inactive.iter().enumerate() {
        let lam = fit.penalty(j);
        b[ks + i] = sqrt_n * (lam - shift_out[i]);
        b[ks + ko + i] = sqrt_n * (lam + shift_out[i]);
    }

    let sigma = selection_covariance(part, hinv);
    check_realized(&a, &z, &b)?;

    Ok(SelectionEvent {
        active: part.active.clone(),
        inactive: part.inactive.clone(),
        signs: fit.signs.clone(),
        lambda: fit.lambda,
        n: sb.n,
        a,
        z,
        b,
        sigma,
        theta_hat_m: sb.theta_hat_m.clone(),
        theta_tilde_m,
        beta_tilde,
        h_m_inv: hinv.clone(),
        h_m_out: part.h_m_out.clone(),
        i_m: part.i_m.clone(),
        i_m_out: part.i_m_out.clone(),
        score_m: part.s_m.clone(),
        kkt_score_m: sb.kkt_score_m.clone(),
    })
}

/// `Σ̂` from the three block displays.
fn selection_covariance(part: &ModelPartition, hinv: &DMatrix<f64>) -> DMatrix<f64> {
    let km = part.active.len();
    let ks = km - 1;
    let ko = part.inactive.len();
    let sandwich = hinv * &part.i_m * hinv;
    let k_mat = &part.h_out_m * hinv;

    let s_bb = sandwich.view((1, 1), (ks, ks)).into_owned();
    let s_bs_full = hinv * &part.i_m_out - &sandwich * &part.h_m_out;
    let s_bs = s_bs_full.rows(1, ks).into_owned();
    let s_ss = &part.i_out - &k_mat * &part.i_m_out - &part.i_out_m * k_mat.transpose()
        + &k_mat * &part.i_m * k_mat.transpose();

    let mut sigma = DMatrix::zeros(ks + ko, ks + ko);
    sigma.view_mut((0, 0), (ks, ks)).copy_from(&s_bb);
    sigma.view_mut((0, ks), (ks, ko)).copy_from(&s_bs);
    sigma.view_mut((ks, 0), (ko, ks)).copy_from(&s_bs.transpose());
    sigma.view_mut((ks, ks), (ko, ko)).copy_from(&s_ss);
    symmetrize(&mut sigma);
    sigma
}

/// One-dimensional truncation of `{A Z ≤ b}` along `η`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyhedralSlice {
    pub eta: DVector<f64>,
    pub c: DVector<f64>,
    pub r: DVector<f64>,
    pub v_minus: f64,
    pub v_plus: f64,
    pub v_zero: f64,
    /// `η'Z`
    pub eta_z: f64,
    /// `η'Σ̂η`
    pub variance: f64,
}

impl PolyhedralSlice {
    /// The event `{V⁻ ≤ η'Z ≤ V⁺, V⁰ ≥ 0}` evaluated at a given `η'Z`.
    pub fn contains(&self, eta_z: f64) -> bool {
        self.v_minus <= eta_z && eta_z <= self.v_plus && self.v_zero >= 0.0
    }
}

pub fn polyhedral_slice(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    z: &DVector<f64>,
    sigma: &DMatrix<f64>,
    eta: &DVector<f64>,
) -> Result<PolyhedralSlice> {
    let k = z.len();
    if a.ncols() != k || sigma.nrows() != k || sigma.ncols() != k || eta.len() != k || b.len() != a.nrows() {
        return Err(Error::Argument("inconsistent dimensions in polyhedral system".into()));
    }
    let s_eta = sigma * eta;
    let variance = eta.dot(&s_eta);
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::Numeric(format!(
            "direction has non-positive variance {variance:.3e} under the covariance estimate"
        )));
    }
    let c = s_eta / variance;
    let eta_z = eta.dot(z);
    let r = z - &c * eta_z;
    let ac = a * &c;
    let resid = b - a * &r;
    let scale = ac.amax();
    let (mut v_minus, mut v_plus, mut v_zero) = (f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY);
    for j in 0..a.nrows() {
        if ac[j].abs() <= ZERO_DIRECTION_TOL * scale {
            v_zero = v_zero.min(resid[j]);
        } else if ac[j] < 0.0 {
            v_minus = v_minus.max(resid[j] / ac[j]);
        } else {
            v_plus = v_plus.min(resid[j] / ac[j]);
        }
    }
    Ok(PolyhedralSlice {
        eta: eta.clone(),
        c,
        r,
        v_minus,
        v_plus,
        v_zero,
        eta_z,
        variance,
    })
}

/// Interval, p-value and standardized statistic for `η'μ / √n` from a slice.
struct PivotInference {
    ci: (f64, f64),
    p_value: f64,
    statistic: f64,
    truncation: (f64, f64),
}

fn pivot_inference(sl: &PolyhedralSlice, sqrt_n: f64, null: f64, zeta: f64) -> Result<PivotInference> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::Argument(format!("level zeta must be in (0,1), got {zeta}")));
    }
    let x = sl.eta_z;
    let tol = EVENT_TOL * x.abs().max(1.0);
    if sl.v_zero < -tol || x < sl.v_minus - tol || x > sl.v_plus + tol {
        return Err(Error::Consistency(format!(
            "observed statistic {x:.6e} lies outside its truncation [{:.6e}, {:.6e}] (V0 = {:.3e})",
            sl.v_minus, sl.v_plus, sl.v_zero
        )));
    }
    // rounding can put the observation exactly on a bound
    let a = sl.v_minus.min(x - tol);
    let b = sl.v_plus.max(x + tol);
    let var = sl.variance;
    let lo = invert_mean(x, var, a, b, 1.0 - zeta / 2.0)?.value();
    let hi = invert_mean(x, var, a, b, zeta / 2.0)?.value();
    let mu0 = sqrt_n * null;
    let f = match TruncatedNormal::new(mu0, var, a, b)?.cdf(x) {
        Ok(v) => v,
        // the null mean is so far out that the observation sits in a tail of zero mass
        Err(Error::TailDegenerate) => {
            if mu0 > x {
                0.0
            } else {
                1.0
            }
        }
        Err(e) => return Err(e),
    };
    Ok(PivotInference {
        ci: (lo / sqrt_n, hi / sqrt_n),
        p_value: (2.0 * f.min(1.0 - f)).clamp(0.0, 1.0),
        statistic: (x - mu0) / var.sqrt(),
        truncation: (sl.v_minus, sl.v_plus),
    })
}

/// Selective interval and test for the coefficient of regressor `j` in the
/// selected model, `H₀: β_{M,j} = null`.
pub fn si_ci_coordinate(ev: &SelectionEvent, j: usize, null: f64, zeta: f64) -> Result<InferenceResult> {
    let pos = ev.slope_position(j).ok_or_else(|| {
        Error::NotApplicable(format!("regressor {j} is not in the selected model"))
    })?;
    let mut eta = DVector::zeros(ev.z.len());
    eta[pos] = 1.0;
    let sl = ev.slice(&eta)?;
    let pi = pivot_inference(&sl, ev.sqrt_n(), null, zeta)?;
    Ok(InferenceResult {
        method: Method::SI,
        target: format!("beta[{j}] | selected model"),
        estimate: ev.beta_tilde[pos],
        std_error: (sl.variance / ev.n as f64).sqrt(),
        statistic: pi.statistic,
        df: None,
        null_value: null,
        p_value: pi.p_value,
        ci: pi.ci,
        zeta,
        truncation: Some(pi.truncation),
        pseudo_inverse_used: false,
    })
}

/// Selection event augmented with a scalar one-step estimate `√n ρ̃` in front.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhoAugmentation {
    pub a: DMatrix<f64>,
    pub z: DVector<f64>,
    pub b: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// `ρ(θ̂_M)`
    pub rho_hat: f64,
    /// `ρ(θ̂_M) + ρ̇_M' H_M⁻¹ S_M`
    pub rho_tilde: f64,
    /// Sign conditioned on, when requested.
    pub sign: Option<f64>,
    pub n: usize,
}

/// Prepend the one-step estimate of a scalar function `ρ` of the selected
/// coefficients. `rho_dot_m` is the gradient of `ρ` with respect to `θ_M`
/// at `θ̂_M`, in the order of `ev.active`.
pub fn augment_for_rho(
    ev: &SelectionEvent,
    rho_hat: f64,
    rho_dot_m: &DVector<f64>,
    condition_on_sign: bool,
) -> Result<RhoAugmentation> {
    let km = ev.active.len();
    if rho_dot_m.len() != km {
        return Err(Error::Argument(format!(
            "gradient has length {}, expected {km}",
            rho_dot_m.len()
        )));
    }
    if rho_dot_m.iter().all(|v| *v == 0.0) {
        return Err(Error::Argument("gradient of the target function is zero".into()));
    }
    let p = ev.z.len();
    let ks = km - 1;
    let ko = ev.inactive.len();
    let sqrt_n = ev.sqrt_n();

    let g = ev.h_m_inv.transpose() * rho_dot_m; // H_M⁻¹ ρ̇ (H_M symmetric)
    let rho_tilde = rho_hat + g.dot(&ev.score_m);

    let sandwich_row = (&ev.i_m * &ev.h_m_inv).transpose() * &g; // (ρ̇'H⁻¹ I_M H⁻¹)'
    let s_rr = g.dot(&(&ev.i_m * &g));
    let s_rb = sandwich_row.rows(1, ks).into_owned();
    let s_rs = ev.i_m_out.transpose() * &g - ev.h_m_out.transpose() * &sandwich_row;

    let mut sigma = DMatrix::zeros(p + 1, p + 1);
    sigma[(0, 0)] = s_rr;
    for i in 0..ks {
        sigma[(0, 1 + i)] = s_rb[i];
        sigma[(1 + i, 0)] = s_rb[i];
    }
    for i in 0..ko {
        sigma[(0, 1 + ks + i)] = s_rs[i];
        sigma[(1 + ks + i, 0)] = s_rs[i];
    }
    sigma.view_mut((1, 1), (p, p)).copy_from(&ev.sigma);

    let rows = ev.a.nrows() + 1;
    let mut a = DMatrix::zeros(rows, p + 1);
    a.view_mut((1, 1), (ev.a.nrows(), p)).copy_from(&ev.a);
    let mut b = DVector::zeros(rows);
    b.rows_mut(1, ev.b.len()).copy_from(&ev.b);
    let mut z = DVector::zeros(p + 1);
    z[0] = sqrt_n * rho_tilde;
    z.rows_mut(1, p).copy_from(&ev.z);

    let sign = if condition_on_sign {
        if rho_hat == 0.0 {
            return Err(Error::NotApplicable(
                "estimated target is exactly zero, so its sign is undefined".into(),
            ));
        }
        let s = rho_hat.signum();
        a[(0, 0)] = -s;
        b[0] = -s * sqrt_n * g.dot(&ev.kkt_score_m);
        check_realized(&a.rows(0, 1).into_owned(), &z, &b.rows(0, 1).into_owned())?;
        Some(s)
    } else {
        None
    };

    Ok(RhoAugmentation {
        a,
        z,
        b,
        sigma,
        rho_hat,
        rho_tilde,
        sign,
        n: ev.n,
    })
}

/// Selective interval and test for `H₀: ρ_M(θ_M) = null`.
pub fn si_ci_rho(aug: &RhoAugmentation, null: f64, zeta: f64) -> Result<InferenceResult> {
    let mut eta = DVector::zeros(aug.z.len());
    eta[0] = 1.0;
    let sl = polyhedral_slice(&aug.a, &aug.b, &aug.z, &aug.sigma, &eta)?;
    let sqrt_n = (aug.n as f64).sqrt();
    let pi = pivot_inference(&sl, sqrt_n, null, zeta)?;
    Ok(InferenceResult {
        method: if aug.sign.is_some() { Method::SI } else { Method::SI2 },
        target: "rho | selected model".into(),
        estimate: aug.rho_tilde,
        std_error: (sl.variance / aug.n as f64).sqrt(),
        statistic: pi.statistic,
        df: None,
        null_value: null,
        p_value: pi.p_value,
        ci: pi.ci,
        zeta,
        truncation: Some(pi.truncation),
        pseudo_inverse_used: false,
    })
}

/// Selective inference on an arbitrary linear system, exposed for callers
/// that build their own `(A, b, Z, Σ̂)`.
pub fn si_ci_linear(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    z: &DVector<f64>,
    sigma: &DMatrix<f64>,
    eta: &DVector<f64>,
    n: usize,
    null: f64,
    zeta: f64,
) -> Result<InferenceResult> {
    let sl = polyhedral_slice(a, b, z, sigma, eta)?;
    let sqrt_n = (n as f64).sqrt();
    let pi = pivot_inference(&sl, sqrt_n, null, zeta)?;
    Ok(InferenceResult {
        method: Method::SI,
        target: "eta'mu".into(),
        estimate: sl.eta_z / sqrt_n,
        std_error: (sl.variance / n as f64).sqrt(),
        statistic: pi.statistic,
        df: None,
        null_value: null,
        p_value: pi.p_value,
        ci: pi.ci,
        zeta,
        truncation: Some(pi.truncation),
        pseudo_inverse_used: false,
    })
}
