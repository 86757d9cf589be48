//! Survey-weighted ℓ1-penalized GLM with an unpenalized intercept.
//!
//! The solver is a proximal Newton method: at each outer iteration the
//! smooth part `-L(θ)` is replaced by its second-order expansion (the IRLS
//! quadratic), which is minimized by cyclic coordinate descent with
//! soft-thresholding on the slopes and an exact update for the intercept.
//! A backtracking line search on the true objective keeps the objective
//! non-increasing. Soft-thresholding yields exact zeros, so the active set is
//! read off as the nonzero slopes with no epsilon cut-off.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{score, Dataset, GlmFamily};

/// Stopping rules and options for [`fit_penalized_with`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Outer stop when the largest coordinate change falls below this.
    pub tol: f64,
    pub tol_kkt: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Penalize each slope by its weighted standard deviation, which is the
    /// same as fitting on standardized columns and back-transforming.
    pub standardize: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            tol_kkt: 1e-6,
            max_outer: 200,
            max_inner: 1000,
            standardize: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LassoFit {
    pub theta: DVector<f64>,
    pub lambda: f64,
    /// Sorted active set; always contains the intercept `0`.
    pub active: Vec<usize>,
    /// Signs of the active slopes, aligned with `active[1..]`.
    pub signs: Vec<f64>,
    /// Inactive subgradient `u = S₋M / (λ·factor)`, aligned with the inactive set.
    pub inactive_subgradient: Vec<f64>,
    /// Per-coordinate penalty multipliers; entry 0 is 0 (intercept).
    pub penalty_factors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
}

impl LassoFit {
    pub fn inactive(&self) -> Vec<usize> {
        (0..self.theta.len())
            .filter(|j| self.active.binary_search(j).is_err())
            .collect()
    }

    /// Effective penalty `λ·factor_j` on coordinate `j`.
    pub fn penalty(&self, j: usize) -> f64 {
        self.lambda * self.penalty_factors[j]
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.active.binary_search(&j).is_ok()
    }

    pub fn slope_l1(&self) -> f64 {
        self.theta.iter().skip(1).map(|v| v.abs()).sum()
    }

    pub(crate) fn from_theta(
        ds: &Dataset,
        fam: &dyn GlmFamily,
        theta: DVector<f64>,
        lambda: f64,
        penalty_factors: Vec<f64>,
        iterations: usize,
        converged: bool,
        objective_trace: Vec<f64>,
    ) -> Result<Self> {
        let mut active = vec![0usize];
        let mut signs = Vec::new();
        for j in 1..theta.len() {
            if theta[j] != 0.0 {
                active.push(j);
                signs.push(theta[j].signum());
            }
        }
        let s = score(ds, fam, &theta)?;
        let inactive_subgradient = (1..theta.len())
            .filter(|&j| theta[j] == 0.0)
            .map(|j| {
                let pen = lambda * penalty_factors[j];
                if pen > 0.0 {
                    s[j] / pen
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            theta,
            lambda,
            active,
            signs,
            inactive_subgradient,
            penalty_factors,
            iterations,
            converged,
            objective_trace,
        })
    }
}

/// Per-coordinate KKT residuals of a fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KktReport {
    /// `|S₀(θ̂)|`.
    pub intercept_residual: f64,
    /// `max |S_j − λ_j sign(θ̂_j)|` over active slopes.
    pub max_active_residual: f64,
    /// `max (|S_k| − λ_k)₊` over inactive slopes.
    pub max_inactive_excess: f64,
    pub u: Vec<f64>,
    pub tol_kkt: f64,
    pub violated: bool,
}

pub(crate) fn kkt_from_score(
    s: &DVector<f64>,
    theta: &DVector<f64>,
    lambda: f64,
    factors: &[f64],
    tol_kkt: f64,
) -> KktReport {
    let intercept_residual = s[0].abs();
    let mut max_active_residual: f64 = 0.0;
    let mut max_inactive_excess: f64 = 0.0;
    let mut u = Vec::new();
    let mut violated = intercept_residual > tol_kkt;
    for j in 1..theta.len() {
        let pen = lambda * factors[j];
        if theta[j] != 0.0 {
            let r = (s[j] - pen * theta[j].signum()).abs();
            max_active_residual = max_active_residual.max(r);
            if r > tol_kkt * pen.max(1.0) {
                violated = true;
            }
        } else {
            let ex = (s[j].abs() - pen).max(0.0);
            max_inactive_excess = max_inactive_excess.max(ex);
            if s[j].abs() > pen * (1.0 + tol_kkt) {
                violated = true;
            }
            u.push(if pen > 0.0 { s[j] / pen } else { 0.0 });
        }
    }
    KktReport {
        intercept_residual,
        max_active_residual,
        max_inactive_excess,
        u,
        tol_kkt,
        violated,
    }
}

pub fn kkt_certificate(ds: &Dataset, fam: &dyn GlmFamily, fit: &LassoFit) -> Result<KktReport> {
    kkt_certificate_with(ds, fam, fit, SolverOptions::default().tol_kkt)
}

pub fn kkt_certificate_with(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    fit: &LassoFit,
    tol_kkt: f64,
) -> Result<KktReport> {
    let ds = ds.normalized();
    let s = score(&ds, fam, &fit.theta)?;
    Ok(kkt_from_score(&s, &fit.theta, fit.lambda, &fit.penalty_factors, tol_kkt))
}

/// Solve `min −L(θ) + λ Σ_{j≥1} |θ_j|` with default options.
pub fn fit_penalized(ds: &Dataset, fam: &dyn GlmFamily, lambda: f64) -> Result<LassoFit> {
    fit_penalized_with(ds, fam, lambda, &SolverOptions::default(), None)
}

pub fn fit_penalized_with(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    lambda: f64,
    opts: &SolverOptions,
    warm: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Argument(format!("penalty must be finite and >= 0, got {lambda}")));
    }
    ds.check_outcomes(fam)?;
    let ds = ds.normalized();
    check_columns(&ds)?;
    let factors = penalty_factors(&ds, opts.standardize)?;
    let problem = Problem::new(&ds);
    let start = match warm {
        Some(t) => {
            ds.check_dim(t)?;
            t.as_slice().to_vec()
        }
        None => null_start(&ds, fam),
    };
    let out = problem.solve(fam, lambda, &factors, start, opts);
    if !out.converged {
        return Err(Error::NotConverged {
            iterations: out.iterations,
            last_change: out.last_change,
            last_iterate: out.theta,
        });
    }
    LassoFit::from_theta(
        &ds,
        fam,
        DVector::from_vec(out.theta),
        lambda,
        factors,
        out.iterations,
        true,
        out.trace,
    )
}

/// Smallest penalty at which every slope is zero: `max_{j≥1} |S_j(θ̂_null)| / factor_j`.
pub fn lambda_max(ds: &Dataset, fam: &dyn GlmFamily) -> Result<f64> {
    lambda_max_with(ds, fam, false)
}

pub fn lambda_max_with(ds: &Dataset, fam: &dyn GlmFamily, standardize: bool) -> Result<f64> {
    ds.check_outcomes(fam)?;
    let ds = ds.normalized();
    let theta = null_fit(&ds, fam)?;
    let s = score(&ds, fam, &theta)?;
    let factors = penalty_factors(&ds, standardize)?;
    Ok((1..s.len())
        .filter(|&j| factors[j] > 0.0)
        .map(|j| s[j].abs() / factors[j])
        .fold(0.0, f64::max))
}

/// Intercept-only maximum likelihood fit, as a full parameter vector.
pub fn null_fit(ds: &Dataset, fam: &dyn GlmFamily) -> Result<DVector<f64>> {
    let k = ds.x.ncols();
    let y = ds.y.as_slice();
    let w = ds.w.as_slice();
    let alpha = match fam.null_intercept(y, w) {
        Some(a) => a,
        None => {
            if let Some(m) = bernoulli_mean(fam, y, w) {
                if m <= 0.0 || m >= 1.0 {
                    return Err(Error::Data(
                        "outcome has a single class; the intercept diverges".into(),
                    ));
                }
            }
            newton_intercept(fam, y, w)?
        }
    };
    let mut theta = DVector::zeros(k);
    theta[0] = alpha;
    Ok(theta)
}

fn bernoulli_mean(fam: &dyn GlmFamily, y: &[f64], w: &[f64]) -> Option<f64> {
    if y.iter().all(|&v| fam.validate_outcome(v) && (v == 0.0 || v == 1.0)) {
        let sw: f64 = w.iter().sum();
        Some(y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw)
    } else {
        None
    }
}

fn newton_intercept(fam: &dyn GlmFamily, y: &[f64], w: &[f64]) -> Result<f64> {
    let mut a = 0.0;
    for _ in 0..100 {
        let (mut g, mut h) = (0.0, 0.0);
        for i in 0..y.len() {
            g += w[i] * fam.gdot(y[i], a);
            h += w[i] * fam.gddot(y[i], a);
        }
        if !(h > 0.0) {
            break;
        }
        let step = g / h;
        a -= step;
        if step.abs() < 1e-14 {
            return Ok(a);
        }
    }
    Err(Error::Data("intercept-only fit did not converge".into()))
}

fn null_start(ds: &Dataset, fam: &dyn GlmFamily) -> Vec<f64> {
    match null_fit(ds, fam) {
        Ok(t) => t.as_slice().to_vec(),
        Err(_) => vec![0.0; ds.x.ncols()],
    }
}

fn check_columns(ds: &Dataset) -> Result<()> {
    let n = ds.n();
    let xs = ds.x.as_slice();
    for j in 1..ds.x.ncols() {
        if xs[j * n..(j + 1) * n].iter().all(|&v| v == 0.0) {
            return Err(Error::Argument(format!("design column {j} is identically zero")));
        }
    }
    Ok(())
}

pub(crate) fn penalty_factors(ds: &Dataset, standardize: bool) -> Result<Vec<f64>> {
    let k = ds.x.ncols();
    let mut f = vec![1.0; k];
    f[0] = 0.0;
    if standardize {
        let n = ds.n();
        let sw = ds.weight_sum();
        let xs = ds.x.as_slice();
        for (j, fj) in f.iter_mut().enumerate().skip(1) {
            let col = &xs[j * n..(j + 1) * n];
            let mean: f64 = col.iter().zip(ds.w.iter()).map(|(x, w)| x * w).sum::<f64>() / sw;
            let var: f64 = col
                .iter()
                .zip(ds.w.iter())
                .map(|(x, w)| w * (x - mean).powi(2))
                .sum::<f64>()
                / sw;
            if !(var > 0.0) {
                return Err(Error::Argument(format!("column {j} is constant; cannot standardize")));
            }
            *fj = var.sqrt();
        }
    }
    Ok(f)
}

pub(crate) struct SolveOutcome {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub last_change: f64,
    pub trace: Vec<f64>,
}

/// Column-major view of a (rescaled) dataset used by the solver loops.
pub(crate) struct Problem<'a> {
    n: usize,
    k: usize,
    x: &'a [f64],
    y: &'a [f64],
    w: &'a [f64],
}

impl<'a> Problem<'a> {
    pub fn new(ds: &'a Dataset) -> Self {
        Self {
            n: ds.n(),
            k: ds.x.ncols(),
            x: ds.x.as_slice(),
            y: ds.y.as_slice(),
            w: ds.w.as_slice(),
        }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.x[j * self.n..(j + 1) * self.n]
    }

    fn eta(&self, theta: &[f64]) -> Vec<f64> {
        let mut eta = vec![0.0; self.n];
        for (j, &t) in theta.iter().enumerate() {
            if t != 0.0 {
                for (e, x) in eta.iter_mut().zip(self.col(j)) {
                    *e += t * x;
                }
            }
        }
        eta
    }

    fn smooth(&self, fam: &dyn GlmFamily, eta: &[f64]) -> f64 {
        let s: f64 = (0..self.n).map(|i| self.w[i] * fam.g(self.y[i], eta[i])).sum();
        s / self.n as f64
    }

    fn penalty(theta: &[f64], lambda: f64, f: &[f64]) -> f64 {
        lambda * theta.iter().zip(f).map(|(t, f)| f * t.abs()).sum::<f64>()
    }

    pub fn solve(
        &self,
        fam: &dyn GlmFamily,
        lambda: f64,
        factors: &[f64],
        mut theta: Vec<f64>,
        opts: &SolverOptions,
    ) -> SolveOutcome {
        let (n, k) = (self.n, self.k);
        let nf = n as f64;
        let pen: Vec<f64> = factors.iter().map(|f| lambda * f).collect();
        let mut eta = self.eta(&theta);
        let mut obj = self.smooth(fam, &eta) + Self::penalty(&theta, lambda, factors);
        let mut trace = vec![obj];
        let mut last_change = f64::INFINITY;
        let mut gd = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut grad = vec![0.0; k];
        let mut hdiag = vec![0.0; k];
        let mut d = vec![0.0; n];

        for it in 0..opts.max_outer {
            for i in 0..n {
                gd[i] = self.w[i] * fam.gdot(self.y[i], eta[i]) / nf;
                v[i] = self.w[i] * fam.gddot(self.y[i], eta[i]).max(1e-12) / nf;
            }
            for j in 0..k {
                let c = self.col(j);
                let mut g = 0.0;
                let mut h = 0.0;
                for i in 0..n {
                    g += gd[i] * c[i];
                    h += v[i] * c[i] * c[i];
                }
                grad[j] = g;
                hdiag[j] = h;
            }
            if last_change < opts.tol && self.kkt_ok(&grad, &theta, &pen, opts.tol_kkt) {
                return SolveOutcome {
                    theta,
                    iterations: it,
                    converged: true,
                    last_change,
                    trace,
                };
            }

            // coordinate descent on the local quadratic, solved more
            // accurately as the outer iterations settle
            let inner_tol = (last_change * last_change).clamp(opts.tol * 0.01, 1e-4);
            let mut tn = theta.clone();
            d.iter_mut().for_each(|e| *e = 0.0);
            // A few passes settle the support, then an active-set solve
            // finishes the subproblem. Plain coordinate descent is the fallback.
            let mut sweeps = 0;
            let full = self.sweep(&mut tn, &mut d, &grad, &hdiag, &v, &pen, true);
            sweeps += 1;
            let mut done = full < inner_tol;
            while !done && sweeps < 6 {
                let ch = self.sweep(&mut tn, &mut d, &grad, &hdiag, &v, &pen, false);
                sweeps += 1;
                done = ch < inner_tol;
            }
            let mut exact = self.exact_subproblem(&theta, &tn, &grad, &v, &pen);
            if exact.is_none() && !done {
                loop {
                    let full = self.sweep(&mut tn, &mut d, &grad, &hdiag, &v, &pen, true);
                    sweeps += 1;
                    if full < inner_tol || sweeps >= opts.max_inner {
                        break;
                    }
                    loop {
                        let ch = self.sweep(&mut tn, &mut d, &grad, &hdiag, &v, &pen, false);
                        sweeps += 1;
                        if ch < inner_tol || sweeps >= opts.max_inner {
                            break;
                        }
                    }
                }
                exact = self.exact_subproblem(&theta, &tn, &grad, &v, &pen);
            }
            if let Some((t_exact, d_exact)) = exact {
                tn = t_exact;
                d = d_exact;
            }

            // line search on the true objective
            let delta: Vec<f64> = tn.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let dmax = delta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if dmax == 0.0 {
                last_change = 0.0;
                continue;
            }
            let pen_old = Self::penalty(&theta, lambda, factors);
            let dec: f64 = grad.iter().zip(&delta).map(|(g, d)| g * d).sum::<f64>()
                + Self::penalty(&tn, lambda, factors)
                - pen_old;
            let mut step = 1.0;
            let mut accepted = false;
            let mut cand = vec![0.0; k];
            let mut eta_c = vec![0.0; n];
            for _ in 0..40 {
                for j in 0..k {
                    cand[j] = if step == 1.0 { tn[j] } else { theta[j] + step * delta[j] };
                }
                for i in 0..n {
                    eta_c[i] = eta[i] + step * d[i];
                }
                let oc = self.smooth(fam, &eta_c) + Self::penalty(&cand, lambda, factors);
                // Near the optimum the predicted decrease is below what the
                // objective can resolve, so a full step is taken on the model.
                let at_roundoff = step == 1.0
                    && dec.abs() <= 1e-10 * obj.abs().max(1.0)
                    && oc <= obj + 1e-13 * obj.abs().max(1.0);
                if oc.is_finite() && (oc <= obj + 1e-4 * step * dec.min(0.0) || at_roundoff) {
                    accepted = true;
                    obj = oc;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // no further decrease is representable; accept only if stationary
                last_change = 0.0;
                if self.kkt_ok(&grad, &theta, &pen, opts.tol_kkt) {
                    return SolveOutcome {
                        theta,
                        iterations: it + 1,
                        converged: true,
                        last_change,
                        trace,
                    };
                }
                return SolveOutcome {
                    theta,
                    iterations: it + 1,
                    converged: false,
                    last_change: dmax,
                    trace,
                };
            }
            // distance to the model minimizer, not the damped move
            last_change = dmax;
            theta.copy_from_slice(&cand);
            eta.copy_from_slice(&eta_c);
            trace.push(obj);
        }
        // final check after the last update
        let s = self.grad(fam, &eta);
        let converged = last_change < opts.tol && self.kkt_ok(&s, &theta, &pen, opts.tol_kkt);
        SolveOutcome {
            theta,
            iterations: opts.max_outer,
            converged,
            last_change,
            trace,
        }
    }

    fn grad(&self, fam: &dyn GlmFamily, eta: &[f64]) -> Vec<f64> {
        let nf = self.n as f64;
        let gd: Vec<f64> = (0..self.n)
            .map(|i| self.w[i] * fam.gdot(self.y[i], eta[i]) / nf)
            .collect();
        (0..self.k)
            .map(|j| self.col(j).iter().zip(&gd).map(|(x, g)| x * g).sum())
            .collect()
    }

    /// KKT check in terms of `grad = −S`.
    fn kkt_ok(&self, grad: &[f64], theta: &[f64], pen: &[f64], tol: f64) -> bool {
        if grad[0].abs() > tol {
            return false;
        }
        for j in 1..self.k {
            let s = -grad[j];
            if theta[j] != 0.0 {
                if (s - pen[j] * theta[j].signum()).abs() > tol * pen[j].max(1.0) {
                    return false;
                }
            } else if s.abs() > pen[j] * (1.0 + tol) {
                return false;
            }
        }
        true
    }

    /// Minimize the local quadratic model
    /// `grad'(t − θ) + ½ (t − θ)' X'VX (t − θ) + Σ pen_j |t_j|`
    /// by an active-set method started from the support and signs of `tn`.
    ///
    /// Each round solves the model on the current support with signs fixed.
    /// A sign change stops the move at the first coordinate that reaches zero
    /// and drops it; otherwise the worst subgradient violation outside the
    /// support joins it. Returns the minimizer with `X(t − θ)`, or `None` if
    /// a solve fails or the round budget runs out.
    fn exact_subproblem(
        &self,
        theta: &[f64],
        tn: &[f64],
        grad: &[f64],
        v: &[f64],
        pen: &[f64],
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let (n, k) = (self.n, self.k);
        let mut t = tn.to_vec();
        let mut sign: Vec<f64> = t.iter().map(|x| if *x == 0.0 { 0.0 } else { x.signum() }).collect();
        let mut act: Vec<usize> = (0..k).filter(|&j| j == 0 || t[j] != 0.0).collect();
        // entries of X'VX, filled on demand
        let mut qc = vec![f64::NAN; k * k];
        let mut qe = |a: usize, b: usize| -> f64 {
            let e = qc[a * k + b];
            if !e.is_nan() {
                return e;
            }
            let (ca, cb) = (self.col(a), self.col(b));
            let e: f64 = (0..n).map(|i| v[i] * ca[i] * cb[i]).sum();
            qc[a * k + b] = e;
            qc[b * k + a] = e;
            e
        };
        let nz: Vec<usize> = (0..k).filter(|&l| theta[l] != 0.0).collect();
        for _ in 0..(2 * k + 20) {
            let m = act.len();
            let mut q = nalgebra::DMatrix::zeros(m, m);
            let mut rhs = DVector::zeros(m);
            for (a, &ja) in act.iter().enumerate() {
                let mut r = -(grad[ja] + pen[ja] * sign[ja]);
                for &l in &nz {
                    if !act.contains(&l) {
                        r += qe(ja, l) * theta[l];
                    }
                }
                rhs[a] = r;
                for (b, &jb) in act.iter().enumerate().take(a + 1) {
                    let e = qe(ja, jb);
                    q[(a, b)] = e;
                    q[(b, a)] = e;
                }
            }
            let delta = q.cholesky()?.solve(&rhs);
            // longest move toward the support solution that keeps the signs
            let mut alpha = 1.0;
            let mut blocking = None;
            for (a, &j) in act.iter().enumerate() {
                let target = theta[j] + delta[a];
                if j > 0 && target * sign[j] <= 0.0 {
                    let frac = t[j] / (t[j] - target);
                    if frac < alpha {
                        alpha = frac;
                        blocking = Some(j);
                    }
                }
            }
            for (a, &j) in act.iter().enumerate() {
                t[j] += alpha * (theta[j] + delta[a] - t[j]);
            }
            if let Some(j) = blocking {
                t[j] = 0.0;
                sign[j] = 0.0;
                act.retain(|&l| l != j);
                continue;
            }
            let mut d = vec![0.0; n];
            for j in 0..k {
                let step = t[j] - theta[j];
                if step != 0.0 {
                    for (e, x) in d.iter_mut().zip(self.col(j)) {
                        *e += step * x;
                    }
                }
            }
            let vd: Vec<f64> = (0..n).map(|i| v[i] * d[i]).collect();
            let mut worst: Option<(usize, f64, f64)> = None;
            for j in 1..k {
                if sign[j] != 0.0 {
                    continue;
                }
                let gj = grad[j] + self.col(j).iter().zip(&vd).map(|(a, b)| a * b).sum::<f64>();
                let excess = gj.abs() - pen[j];
                if excess > 1e-12 * pen[j] + 1e-15 && worst.map_or(true, |(_, e, _)| excess > e) {
                    worst = Some((j, excess, gj));
                }
            }
            match worst {
                None => return Some((t, d)),
                Some((j, _, gj)) => {
                    // enters with the sign that lowers the model
                    sign[j] = -gj.signum();
                    act.push(j);
                }
            }
        }
        None
    }

    /// One coordinate-descent pass; returns the largest scaled change.
    #[allow(clippy::too_many_arguments)]
    fn sweep(
        &self,
        tn: &mut [f64],
        d: &mut [f64],
        grad: &[f64],
        hdiag: &[f64],
        v: &[f64],
        pen: &[f64],
        full: bool,
    ) -> f64 {
        let mut max_change: f64 = 0.0;
        for j in 0..self.k {
            if !full && j > 0 && tn[j] == 0.0 {
                continue;
            }
            let h = hdiag[j];
            if !(h > 0.0) {
                continue;
            }
            let c = self.col(j);
            let mut gj = grad[j];
            for i in 0..self.n {
                gj += v[i] * c[i] * d[i];
            }
            let u = h * tn[j] - gj;
            let new = if j == 0 {
                u / h
            } else {
                soft_threshold(u, pen[j]) / h
            };
            let diff = new - tn[j];
            if diff != 0.0 {
                for i in 0..self.n {
                    d[i] += diff * c[i];
                }
                tn[j] = new;
                max_change = max_change.max(diff.abs() * h.sqrt());
            }
        }
        max_change
    }
}

pub fn soft_threshold(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

/// Warm-started fits along a decreasing penalty grid.
///
/// The path saturates once the deviance explained exceeds 0.999 or stops
/// improving, as common path software does. Later grid points repeat the last
/// solution and `saturated_at` records the index where this happened.
pub(crate) struct PathFit {
    pub thetas: Vec<Vec<f64>>,
    pub saturated_at: Option<usize>,
}

pub(crate) fn fit_path_raw(
    ds: &Dataset,
    fam: &dyn GlmFamily,
    grid: &[f64],
    opts: &SolverOptions,
) -> Result<PathFit> {
    let factors = penalty_factors(ds, opts.standardize)?;
    let problem = Problem::new(ds);
    let null = null_fit(ds, fam)?;
    let null_dev = problem.smooth(fam, &problem.eta(null.as_slice()));
    let mut theta = null.as_slice().to_vec();
    let mut thetas = Vec::with_capacity(grid.len());
    let mut prev_dev = null_dev;
    let mut saturated_at = None;
    for (k, &lam) in grid.iter().enumerate() {
        if saturated_at.is_none() {
            let sol = problem.solve(fam, lam, &factors, theta.clone(), opts);
            theta = sol.theta;
            let dev = problem.smooth(fam, &problem.eta(&theta));
            let explained = 1.0 - dev / null_dev;
            let gain = (prev_dev - dev) / null_dev;
            if explained > 0.999 || (k >= 4 && gain < 1e-5 * explained.max(1e-12)) {
                saturated_at = Some(k);
            }
            prev_dev = dev;
        }
        thetas.push(theta.clone());
    }
    Ok(PathFit { thetas, saturated_at })
}
