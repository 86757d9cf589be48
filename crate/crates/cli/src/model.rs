//! Settings and model fitting shared by `fit` and `infer`.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use svylasso::cv::{cv_select_lambda, CvLoss, CvResult, CvRule, CvSpec};
use svylasso::glm::Logit;
use svylasso::lasso::{fit_penalized, LassoFit};
use svylasso::sim::LambdaPolicy;
use svylasso::Method;

use crate::config;
use crate::data::{model_data, read_csv, ModelData};
use crate::error::{CliError, CliResult};

#[derive(Args, Serialize, Debug, Default)]
pub struct ModelFlags {
    /// TOML settings file; any flag overrides the key of the same name
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Binary outcome column
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    /// Survey weight column; omitted means equal weights
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    /// Comma-separated covariate columns; default is every other column
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
    /// Penalty: `cv` or a non-negative number
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<String>,
    #[arg(long, alias = "cv_folds")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_folds: Option<usize>,
    /// `auc` or `deviance`
    #[arg(long, alias = "cv_loss")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_loss: Option<String>,
    /// `one_se` or `min`
    #[arg(long, alias = "cv_rule")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_rule: Option<String>,
    /// Seed for the cross-validation folds
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output file; standard output when omitted
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Resolved settings for `fit` and `infer`. One file can serve both
/// commands; `fit` ignores the inference keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub data: Option<PathBuf>,
    pub outcome: Option<String>,
    pub weights: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub lambda: LambdaPolicy,
    pub cv_folds: usize,
    pub cv_loss: CvLoss,
    pub cv_rule: CvRule,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub level: f64,
    pub null: f64,
    pub ame: bool,
    pub format: OutputFormat,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            data: None,
            outcome: None,
            weights: None,
            covariates: None,
            lambda: LambdaPolicy::Cv,
            cv_folds: 10,
            cv_loss: CvLoss::Auc,
            cv_rule: CvRule::OneSe,
            seed: 1,
            out: None,
            methods: vec![Method::DB, Method::CAlpha, Method::SI, Method::TSvy],
            level: 0.05,
            null: 0.0,
            ame: false,
            format: OutputFormat::Csv,
        }
    }
}

impl ModelSettings {
    pub fn resolve<F: Serialize>(model: &ModelFlags, extra: Option<&F>) -> CliResult<Self> {
        let mut t = config::read_table(model.config.as_deref())?;
        config::overlay(&mut t, model)?;
        if let Some(e) = extra {
            config::overlay(&mut t, e)?;
        }
        let mut s: ModelSettings = config::finish(t, "model")?;
        // `--covariates ""` asks for the intercept-only model
        if let Some(c) = s.covariates.as_mut() {
            c.retain(|n| !n.trim().is_empty());
        }
        if !(s.level > 0.0 && s.level < 1.0) {
            return Err(CliError::User(format!("level must lie in (0, 1), got {}", s.level)));
        }
        if s.cv_folds < 2 {
            return Err(CliError::User("cv_folds must be at least 2".into()));
        }
        Ok(s)
    }
}

/// Data and penalized fit, with the cross-validation record when used.
pub struct Fitted {
    pub data: ModelData,
    pub fit: LassoFit,
    pub cv: Option<CvResult>,
}

pub fn fit_model(s: &ModelSettings) -> CliResult<Fitted> {
    let path = s
        .data
        .as_ref()
        .ok_or_else(|| CliError::User("no input file; pass --data or set `data` in the config".into()))?;
    let outcome = s
        .outcome
        .as_deref()
        .ok_or_else(|| CliError::User("no outcome column; pass --outcome or set `outcome`".into()))?;
    let frame = read_csv(path)?;
    let data = model_data(&frame, outcome, s.weights.as_deref(), s.covariates.as_deref())?;
    let ds = &data.dataset;
    let (lambda, cv) = match s.lambda {
        LambdaPolicy::Fixed(v) => (v, None),
        // nothing to penalize
        LambdaPolicy::Cv if ds.p() == 0 => (0.0, None),
        LambdaPolicy::Cv => {
            let spec = CvSpec { folds: s.cv_folds, loss: s.cv_loss, rule: s.cv_rule, seed: s.seed, ..Default::default() };
            let r = cv_select_lambda(ds, &Logit, &spec)?;
            (r.lambda, Some(r))
        }
    };
    let fit = fit_penalized(ds, &Logit, lambda)?;
    Ok(Fitted { data, fit, cv })
}

/// Write to the output path, or standard output when none is set.
pub fn emit(out: Option<&std::path::Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("cannot write `{}`: {e}", p.display()))),
        None => {
            use std::io::Write;
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}
