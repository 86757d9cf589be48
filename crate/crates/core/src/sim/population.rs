use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{logistic, Dataset};

/// Finite population of binary regressors and logit outcomes.
///
/// Regressors are stored row-major as bytes (`x̃`, without the intercept).
#[derive(Clone, Debug)]
pub struct Population {
    pub p: usize,
    pub prob: f64,
    pub theta0: Vec<f64>,
    pub x: Vec<u8>,
    pub y: Vec<u8>,
}

impl Population {
    pub fn size(&self) -> usize {
        self.y.len()
    }

    pub fn regressor(&self, i: usize, j: usize) -> u8 {
        self.x[i * self.p + j]
    }

    /// Design rows for `rows`, with the intercept column prepended.
    pub fn dataset(&self, rows: &[usize], weights: Vec<f64>) -> Result<Dataset> {
        let x = DMatrix::from_fn(rows.len(), self.p + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                f64::from(self.regressor(rows[r], c - 1))
            }
        });
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| f64::from(self.y[i])));
        Dataset::new(y, x, DVector::from_vec(weights))
    }
}

/// `θ₀ = (1, 1, 1, 0, …, 0)` with `p` slopes.
pub fn default_theta0(p: usize) -> Vec<f64> {
    (0..=p).map(|j| if j <= 2 { 1.0 } else { 0.0 }).collect()
}

/// Draw `size` rows with `x̃_ij ~ Bernoulli(prob)` and `y ~ Bernoulli(Λ(x'θ₀))`.
pub fn generate_population<R: Rng>(size: usize, p: usize, prob: f64, theta0: &[f64], rng: &mut R) -> Result<Population> {
    if p < 1 {
        return Err(Error::Argument("population needs at least one regressor".into()));
    }
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::Argument(format!("regressor probability {prob} outside [0, 1]")));
    }
    if theta0.len() != p + 1 {
        return Err(Error::Argument(format!(
            "theta0 has {} entries, expected {}",
            theta0.len(),
            p + 1
        )));
    }
    let mut x = vec![0u8; size * p];
    let mut y = vec![0u8; size];
    for i in 0..size {
        let row = &mut x[i * p..(i + 1) * p];
        let mut t = theta0[0];
        for (j, v) in row.iter_mut().enumerate() {
            *v = u8::from(rng.gen::<f64>() < prob);
            if *v == 1 {
                t += theta0[j + 1];
            }
        }
        y[i] = u8::from(rng.gen::<f64>() < logistic(t));
    }
    Ok(Population {
        p,
        prob,
        theta0: theta0.to_vec(),
        x,
        y,
    })
}

/// Population AME of regressor `j` (1-based slope index) by Monte Carlo over
/// the regressor distribution.
pub fn true_ame_oracle<R: Rng>(theta0: &[f64], prob: f64, j: usize, draws: usize, rng: &mut R) -> Result<f64> {
    check_slope_index(theta0, j)?;
    let p = theta0.len() - 1;
    let mut acc = 0.0;
    for _ in 0..draws {
        let mut base = theta0[0];
        for k in 1..=p {
            if k != j && rng.gen::<f64>() < prob {
                base += theta0[k];
            }
        }
        acc += logistic(base + theta0[j]) - logistic(base);
    }
    Ok(acc / draws as f64)
}

/// Exact population AME by enumerating the other regressors. Regressors with a
/// zero coefficient do not move the predictor and are skipped, so the cost is
/// `2^m` for `m` nonzero slopes other than `j`.
pub fn true_ame_exact(theta0: &[f64], prob: f64, j: usize) -> Result<f64> {
    check_slope_index(theta0, j)?;
    let others: Vec<f64> = (1..theta0.len())
        .filter(|&k| k != j && theta0[k] != 0.0)
        .map(|k| theta0[k])
        .collect();
    if others.len() > 24 {
        return Err(Error::Argument(format!(
            "{} nonzero slopes is too many to enumerate",
            others.len()
        )));
    }
    let mut total = 0.0;
    for mask in 0u32..(1u32 << others.len()) {
        let mut base = theta0[0];
        let mut weight = 1.0;
        for (b, &c) in others.iter().enumerate() {
            if mask >> b & 1 == 1 {
                base += c;
                weight *= prob;
            } else {
                weight *= 1.0 - prob;
            }
        }
        total += weight * (logistic(base + theta0[j]) - logistic(base));
    }
    Ok(total)
}

fn check_slope_index(theta0: &[f64], j: usize) -> Result<()> {
    if j == 0 || j >= theta0.len() {
        return Err(Error::Argument(format!(
            "slope index {j} outside 1..={}",
            theta0.len().saturating_sub(1)
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    /// Strata are fixed blocks of the population, unrelated to the data.
    Standard,
    /// Strata are the four cells of the first two regressors.
    Exogenous,
}

/// Stratum definitions and population shares `q_j`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StratificationScheme {
    pub kind: SchemeKind,
    /// Block sizes for the standard scheme; unused for the exogenous one.
    pub strata_sizes: Vec<usize>,
    pub shares: Vec<f64>,
}

impl StratificationScheme {
    /// Blocks of the given sizes; `q_j = N_j / N`.
    pub fn standard(strata_sizes: Vec<usize>) -> Result<Self> {
        if strata_sizes.is_empty() || strata_sizes.contains(&0) {
            return Err(Error::Argument("stratum sizes must be positive".into()));
        }
        let total: usize = strata_sizes.iter().sum();
        let shares = strata_sizes.iter().map(|&s| s as f64 / total as f64).collect();
        Ok(Self {
            kind: SchemeKind::Standard,
            strata_sizes,
            shares,
        })
    }

    /// Cells `(x̃₁, x̃₂) ∈ {(0,0), (0,1), (1,0), (1,1)}` with their theoretical
    /// probabilities under `Bernoulli(prob)` regressors.
    pub fn exogenous(prob: f64) -> Result<Self> {
        if !(prob > 0.0 && prob < 1.0) {
            return Err(Error::Argument(format!(
                "exogenous strata need a regressor probability in (0, 1), got {prob}"
            )));
        }
        let q = 1.0 - prob;
        Ok(Self {
            kind: SchemeKind::Exogenous,
            strata_sizes: Vec::new(),
            shares: vec![q * q, q * prob, prob * q, prob * prob],
        })
    }

    pub fn strata(&self) -> usize {
        self.shares.len()
    }

    /// Stratum label of population row `i`.
    pub fn stratum_of(&self, pop: &Population, i: usize) -> usize {
        match self.kind {
            SchemeKind::Standard => {
                let mut edge = 0;
                for (s, &size) in self.strata_sizes.iter().enumerate() {
                    edge += size;
                    if i < edge {
                        return s;
                    }
                }
                self.strata_sizes.len() - 1
            }
            SchemeKind::Exogenous => 2 * pop.regressor(i, 0) as usize + pop.regressor(i, 1) as usize,
        }
    }

    /// Raw weights `w_j = q_j / (n_j / n)`.
    pub fn raw_weights(&self, per_stratum: &[usize]) -> Vec<f64> {
        let n: usize = per_stratum.iter().sum();
        self.shares
            .iter()
            .zip(per_stratum)
            .map(|(&q, &nj)| q / (nj as f64 / n as f64))
            .collect()
    }

    /// Population rows grouped by stratum.
    pub fn members(&self, pop: &Population) -> Result<Vec<Vec<usize>>> {
        if self.kind == SchemeKind::Standard && self.strata_sizes.iter().sum::<usize>() != pop.size() {
            return Err(Error::Argument(format!(
                "stratum sizes sum to {}, population has {} rows",
                self.strata_sizes.iter().sum::<usize>(),
                pop.size()
            )));
        }
        if self.kind == SchemeKind::Exogenous && pop.p < 2 {
            return Err(Error::Argument("exogenous strata need at least two regressors".into()));
        }
        let mut groups = vec![Vec::new(); self.strata()];
        for i in 0..pop.size() {
            groups[self.stratum_of(pop, i)].push(i);
        }
        Ok(groups)
    }
}

/// Draw `per_stratum` rows from each stratum with replacement and attach the
/// design weights, rescaled to sum to the sample size.
pub fn draw_sample<R: Rng>(pop: &Population, scheme: &StratificationScheme, per_stratum: usize, rng: &mut R) -> Result<Dataset> {
    let groups = scheme.members(pop)?;
    if let Some(s) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::Data(format!("stratum {s} is empty in this population")));
    }
    let raw = scheme.raw_weights(&vec![per_stratum; groups.len()]);
    let mut rows = Vec::with_capacity(per_stratum * groups.len());
    let mut w = Vec::with_capacity(rows.capacity());
    for (s, g) in groups.iter().enumerate() {
        for _ in 0..per_stratum {
            rows.push(g[rng.gen_range(0..g.len())]);
            w.push(raw[s]);
        }
    }
    Ok(pop.dataset(&rows, w)?.rescaled())
}
