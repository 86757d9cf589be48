use serde::{Deserialize, Serialize};
use svylasso::cv::{CvLoss, CvRule};
use svylasso::glm::Logit;
use svylasso::lasso::{kkt_certificate, KktReport};

use crate::error::CliResult;
use crate::model::{emit, fit_model, ModelSettings};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: usize,
    pub loss: CvLoss,
    pub rule: CvRule,
    pub seed: u64,
    pub lambda_min: f64,
    pub lambda_1se: f64,
    pub grid_size: usize,
    pub redraws: usize,
}

/// Everything `fit` writes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub outcome: String,
    pub weights: Option<String>,
    pub n: usize,
    pub lambda: f64,
    pub lambda_policy: String,
    pub coefficients: Vec<Coefficient>,
    /// Names of the selected covariates, intercept excluded.
    pub active: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub kkt: KktReport,
    pub cv: Option<CvSummary>,
}

pub fn report(s: &ModelSettings) -> CliResult<FitReport> {
    let f = fit_model(s)?;
    let names = f.data.coefficient_names();
    let kkt = kkt_certificate(&f.data.dataset, &Logit, &f.fit)?;
    Ok(FitReport {
        outcome: s.outcome.clone().unwrap_or_default(),
        weights: s.weights.clone(),
        n: f.data.dataset.n(),
        lambda: f.fit.lambda,
        lambda_policy: s.lambda.to_string(),
        coefficients: names
            .iter()
            .zip(f.fit.theta.iter())
            .map(|(n, &v)| Coefficient { name: n.clone(), estimate: v })
            .collect(),
        active: f.fit.active.iter().skip(1).map(|&j| names[j].clone()).collect(),
        converged: f.fit.converged,
        iterations: f.fit.iterations,
        kkt,
        cv: f.cv.map(|r| CvSummary {
            folds: s.cv_folds,
            loss: s.cv_loss,
            rule: s.cv_rule,
            seed: s.seed,
            lambda_min: r.lambda_min,
            lambda_1se: r.lambda_1se,
            grid_size: r.grid.len(),
            redraws: r.redraws,
        }),
    })
}

pub fn run(s: &ModelSettings) -> CliResult<()> {
    let r = report(s)?;
    let mut text = serde_json::to_string_pretty(&r).expect("fit report serializes");
    text.push('\n');
    emit(s.out.as_deref(), &text)
}
