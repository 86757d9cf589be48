//! Reference distributions and goodness-of-fit helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// Two-sided normal p-value for a z statistic.
pub fn normal_two_sided(z: f64) -> f64 {
    if !z.is_finite() {
        return if z.is_nan() { f64::NAN } else { 0.0 };
    }
    2.0 * crate::truncnorm::norm_sf(z.abs())
}

pub fn chi2_sf(x: f64, df: usize) -> Result<f64> {
    let d = ChiSquared::new(df as f64)
        .map_err(|e| Error::Argument(format!("chi-squared df {df}: {e}")))?;
    Ok(if x <= 0.0 { 1.0 } else { d.sf(x) })
}

pub fn student_t(df: f64) -> Result<StudentsT> {
    StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Argument(format!("t df {df}: {e}")))
}

/// Kolmogorov-Smirnov distance of a sample from Uniform(0,1). Sorts in place.
pub fn ks_uniform(u: &mut [f64]) -> f64 {
    u.sort_by(|a, b| a.total_cmp(b));
    let n = u.len() as f64;
    u.iter().enumerate().fold(0.0_f64, |d, (i, &v)| {
        let lo = v - i as f64 / n;
        let hi = (i + 1) as f64 / n - v;
        d.max(lo).max(hi)
    })
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Weighted area under the ROC curve, with ties counted as one half.
///
/// Returns `None` when one of the classes carries no weight.
pub fn weighted_auc(y: &[f64], score: &[f64], w: &[f64]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    let (mut w_neg_below, mut acc, mut w_pos, mut w_neg) = (0.0, 0.0, 0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        // group of tied scores
        let mut j = i;
        let (mut gp, mut gn) = (0.0, 0.0);
        while j < idx.len() && score[idx[j]] == score[idx[i]] {
            let k = idx[j];
            if y[k] > 0.5 {
                gp += w[k];
            } else {
                gn += w[k];
            }
            j += 1;
        }
        acc += gp * (w_neg_below + 0.5 * gn);
        w_neg_below += gn;
        w_pos += gp;
        w_neg += gn;
        i = j;
    }
    if w_pos > 0.0 && w_neg > 0.0 {
        Some(acc / (w_pos * w_neg))
    } else {
        None
    }
}
