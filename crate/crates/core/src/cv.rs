//! K-fold cross-validation over a penalty grid.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{Dataset, GlmFamily};
use crate::lasso::{fit_path_raw, lambda_max_with, SolverOptions};
use crate::stats::weighted_auc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvLoss {
    /// Out-of-fold area under the ROC curve; larger is better.
    Auc,
    /// Out-of-fold weighted mean deviance; smaller is better.
    Deviance,
}

/// Which grid point to report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvRule {
    /// Best mean out-of-fold loss.
    Min,
    /// Largest penalty whose mean loss is within one standard error of the best.
    OneSe,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvSpec {
    pub folds: usize,
    pub loss: CvLoss,
    pub rule: CvRule,
    /// Explicit grid. `None` uses `grid_size` log-spaced values from
    /// `λ_max` down to `min_ratio·λ_max`.
    pub grid: Option<Vec<f64>>,
    pub grid_size: usize,
    pub min_ratio: Option<f64>,
    pub seed: u64,
    /// Fold assignments are redrawn at most this many times when a training
    /// fold contains a single outcome class.
    pub max_redraws: usize,
    pub solver: SolverOptions,
}

impl Default for CvSpec {
    fn default() -> Self {
        Self {
            folds: 10,
            loss: CvLoss::Auc,
            rule: CvRule::OneSe,
            grid: None,
            grid_size: 100,
            min_ratio: None,
            seed: 0,
            max_redraws: 20,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvResult {
    /// The penalty picked by the spec's rule.
    pub lambda: f64,
    pub lambda_min: f64,
    pub lambda_1se: f64,
    pub grid: Vec<f64>,
    /// Mean out-of-fold loss per grid point (AUC or deviance).
    pub mean_loss: Vec<f64>,
    /// Standard error of the mean loss across folds.
    pub std_error: Vec<f64>,
    pub redraws: usize,
    /// Held-out folds with a single class, which carry no AUC information.
    pub skipped_folds: usize,
}

/// Sort descending and drop repeats; every value must be finite and positive.
pub fn clean_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(Error::Argument("empty penalty grid".into()));
    }
    if let Some(bad) = grid.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Argument(format!("penalty grid values must be positive, got {bad}")));
    }
    let mut g = grid.to_vec();
    g.sort_by(|a, b| b.total_cmp(a));
    g.dedup();
    Ok(g)
}

/// `size` log-spaced values from `lmax` down to `ratio·lmax`.
pub fn default_grid(lmax: f64, ratio: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return vec![lmax];
    }
    let (hi, lo) = (lmax.ln(), (lmax * ratio).ln());
    (0..size)
        .map(|k| (hi + (lo - hi) * k as f64 / (size - 1) as f64).exp())
        .collect()
}

fn assign_folds(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).map(|i| i % k).collect();
    ids.shuffle(rng);
    ids
}

fn folds_have_both_classes(y: &DVector<f64>, ids: &[usize], k: usize) -> bool {
    (0..k).all(|f| {
        let mut seen = [false; 2];
        for (i, &id) in ids.iter().enumerate() {
            if id != f {
                seen[(y[i] > 0.5) as usize] = true;
            }
        }
        seen[0] && seen[1]
    })
}

/// Choose `λ` by K-fold cross-validation. Ties go to the larger penalty.
pub fn cv_select_lambda(ds: &Dataset, fam: &dyn GlmFamily, spec: &CvSpec) -> Result<CvResult> {
    if spec.folds < 2 {
        return Err(Error::Argument(format!("need at least 2 folds, got {}", spec.folds)));
    }
    if spec.folds > ds.n() {
        return Err(Error::Argument(format!("{} folds for {} observations", spec.folds, ds.n())));
    }
    ds.check_outcomes(fam)?;
    let ds = ds.normalized();
    let grid = match &spec.grid {
        Some(g) => clean_grid(g)?,
        None => {
            let lmax = lambda_max_with(&ds, fam, spec.solver.standardize)?;
            if !(lmax > 0.0) {
                return Err(Error::Data("every slope score is zero at the null fit".into()));
            }
            let ratio = spec
                .min_ratio
                .unwrap_or(if ds.n() < ds.p() { 1e-2 } else { 1e-4 });
            let mut g = default_grid(lmax, ratio, spec.grid_size.max(1));
            // only penalties reached before the full-sample path saturates are candidates
            if let Some(k) = fit_path_raw(&ds, fam, &g, &spec.solver)?.saturated_at {
                g.truncate(k + 1);
            }
            g
        }
    };
    if grid.len() == 1 {
        return Ok(CvResult {
            lambda: grid[0],
            lambda_min: grid[0],
            lambda_1se: grid[0],
            mean_loss: vec![f64::NAN],
            std_error: vec![f64::NAN],
            grid,
            redraws: 0,
            skipped_folds: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut redraws = 0;
    let ids = loop {
        let ids = assign_folds(ds.n(), spec.folds, &mut rng);
        if folds_have_both_classes(&ds.y, &ids, spec.folds) {
            break ids;
        }
        redraws += 1;
        if redraws > spec.max_redraws {
            return Err(Error::Data(format!(
                "a training fold had a single outcome class after {} redraws",
                spec.max_redraws
            )));
        }
    };

    let mut fold_losses: Vec<(f64, Vec<f64>)> = Vec::with_capacity(spec.folds);
    let mut skipped = 0;
    for f in 0..spec.folds {
        let train: Vec<usize> = (0..ds.n()).filter(|&i| ids[i] != f).collect();
        let test: Vec<usize> = (0..ds.n()).filter(|&i| ids[i] == f).collect();
        let tr = ds.select_rows(&train).rescaled();
        let te = ds.select_rows(&test);
        let path = fit_path_raw(&tr, fam, &grid, &spec.solver)?.thetas;
        let wsum = te.weight_sum();
        let mut losses = Vec::with_capacity(grid.len());
        for theta in &path {
            let eta = te.linear_predictor(&DVector::from_column_slice(theta))?;
            let l = match spec.loss {
                CvLoss::Auc => weighted_auc(te.y.as_slice(), eta.as_slice(), te.w.as_slice()),
                CvLoss::Deviance => Some(
                    2.0 * (0..te.n()).map(|i| te.w[i] * fam.g(te.y[i], eta[i])).sum::<f64>() / wsum,
                ),
            };
            match l {
                Some(v) => losses.push(v),
                None => break,
            }
        }
        if losses.len() < grid.len() {
            skipped += 1;
        } else {
            fold_losses.push((wsum, losses));
        }
    }
    if fold_losses.is_empty() {
        return Err(Error::Data("no held-out fold contained both outcome classes".into()));
    }
    // fold-weighted mean and standard error, folds weighted by held-out weight
    let total_w: f64 = fold_losses.iter().map(|(w, _)| w).sum();
    let used = fold_losses.len() as f64;
    let mean: Vec<f64> = (0..grid.len())
        .map(|k| fold_losses.iter().map(|(w, l)| w * l[k]).sum::<f64>() / total_w)
        .collect();
    let std_error: Vec<f64> = (0..grid.len())
        .map(|k| {
            let var = fold_losses.iter().map(|(w, l)| w * (l[k] - mean[k]).powi(2)).sum::<f64>() / total_w;
            if used > 1.0 {
                (var / (used - 1.0)).sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    let sign = if spec.loss == CvLoss::Auc { -1.0 } else { 1.0 };
    // scanning from the largest λ keeps the first optimum on ties
    let mut best = 0;
    for k in 1..grid.len() {
        if sign * mean[k] < sign * mean[best] {
            best = k;
        }
    }
    let bound = sign * mean[best] + std_error[best];
    let one_se = if std_error[best].is_finite() {
        (0..=best).find(|&k| sign * mean[k] <= bound).unwrap_or(best)
    } else {
        best
    };
    Ok(CvResult {
        lambda: match spec.rule {
            CvRule::Min => grid[best],
            CvRule::OneSe => grid[one_se],
        },
        lambda_min: grid[best],
        lambda_1se: grid[one_se],
        grid,
        mean_loss: mean,
        std_error,
        redraws,
        skipped_folds: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::Logit;
    use crate::lasso::lambda_max;
    use crate::testdata::logit_sample;

    #[test]
    fn single_value_grid_is_returned() {
        let ds = logit_sample(100, 3, false, 1);
        let spec = CvSpec { grid: Some(vec![0.07]), ..Default::default() };
        assert_eq!(cv_select_lambda(&ds, &Logit, &spec).unwrap().lambda, 0.07);
    }

    #[test]
    fn duplicates_do_not_change_the_choice() {
        let ds = logit_sample(150, 4, false, 2);
        let lmax = lambda_max(&ds, &Logit).unwrap();
        let g = default_grid(lmax, 0.01, 15);
        let mut dup = g.clone();
        dup.extend_from_slice(&g[3..8]);
        dup.reverse();
        let a = cv_select_lambda(&ds, &Logit, &CvSpec { grid: Some(g), seed: 3, ..Default::default() }).unwrap();
        let b = cv_select_lambda(&ds, &Logit, &CvSpec { grid: Some(dup), seed: 3, ..Default::default() }).unwrap();
        assert_eq!(a.lambda, b.lambda);
        assert_eq!(a.grid, b.grid);
    }

    #[test]
    fn strong_signal_picks_interior_penalty() {
        let ds = logit_sample(300, 5, false, 4);
        let lmax = lambda_max(&ds, &Logit).unwrap();
        for loss in [CvLoss::Auc, CvLoss::Deviance] {
            let r = cv_select_lambda(&ds, &Logit, &CvSpec { loss, grid_size: 30, seed: 5, ..Default::default() }).unwrap();
            assert!(r.lambda < lmax, "{loss:?}");
            assert!(r.mean_loss.len() <= 30 && r.mean_loss.len() == r.grid.len());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = logit_sample(120, 3, true, 6);
        let spec = CvSpec { grid_size: 20, seed: 9, ..Default::default() };
        let a = cv_select_lambda(&ds, &Logit, &spec).unwrap();
        let b = cv_select_lambda(&ds, &Logit, &spec).unwrap();
        assert_eq!(a.lambda, b.lambda);
        assert_eq!(a.mean_loss, b.mean_loss);
    }

    #[test]
    fn single_class_training_fold_is_a_data_error() {
        let mut ds = logit_sample(20, 2, false, 7);
        ds.y.fill(0.0);
        ds.y[0] = 1.0;
        let spec = CvSpec { folds: 20, grid: Some(vec![0.1, 0.05]), ..Default::default() };
        assert!(matches!(cv_select_lambda(&ds, &Logit, &spec), Err(Error::Data(_))));
    }

    #[test]
    fn rejects_bad_specs() {
        let ds = logit_sample(30, 2, false, 8);
        let one = CvSpec { folds: 1, ..Default::default() };
        assert!(matches!(cv_select_lambda(&ds, &Logit, &one), Err(Error::Argument(_))));
        assert!(clean_grid(&[0.1, -0.2]).is_err());
        assert_eq!(clean_grid(&[0.1, 0.3, 0.1]).unwrap(), vec![0.3, 0.1]);
    }
}
