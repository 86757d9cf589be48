use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::population::{default_theta0, draw_sample, generate_population, Population, SchemeKind, StratificationScheme};
use crate::ame::{ame_si, Ame};
use crate::calpha::{auxiliary_ame_solve, auxiliary_coordinate_pin, c_alpha_test};
use crate::cv::{cv_select_lambda, CvLoss, CvRule, CvSpec};
use crate::debiased::{db_wald, survey_glm, tsvy_wald};
use crate::error::{Error, Result};
use crate::glm::{Dataset, Logit};
use crate::lasso::{fit_penalized_with, kkt_certificate, LassoFit, SolverOptions};
use crate::param::Coordinate;
use crate::result::{InferenceResult, Method};
use crate::selective::{build_selection_event, si_ci_coordinate, SelectionEvent};

/// How the penalty is chosen in each replication. Written as `"cv"` or a
/// bare number in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LambdaRepr", into = "LambdaRepr")]
pub enum LambdaPolicy {
    Cv,
    Fixed(f64),
}

impl FromStr for LambdaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("cv") {
            return Ok(LambdaPolicy::Cv);
        }
        match t.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaPolicy::Fixed(v)),
            _ => Err(Error::Argument(format!("lambda must be `cv` or a non-negative number, got `{s}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LambdaRepr {
    Value(f64),
    Text(String),
}

impl TryFrom<LambdaRepr> for LambdaPolicy {
    type Error = Error;

    fn try_from(r: LambdaRepr) -> Result<Self> {
        match r {
            LambdaRepr::Value(v) => v.to_string().parse(),
            LambdaRepr::Text(s) => s.parse(),
        }
    }
}

impl From<LambdaPolicy> for LambdaRepr {
    fn from(l: LambdaPolicy) -> Self {
        match l {
            LambdaPolicy::Cv => LambdaRepr::Text("cv".into()),
            LambdaPolicy::Fixed(v) => LambdaRepr::Value(v),
        }
    }
}

impl fmt::Display for LambdaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaPolicy::Cv => f.write_str("cv"),
            LambdaPolicy::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// The two null hypotheses of the rejection study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Coefficient,
    Ame,
}

impl Hypothesis {
    pub fn methods(self) -> &'static [Method] {
        match self {
            Hypothesis::Coefficient => &[Method::DB, Method::CAlpha, Method::SI, Method::TSvy],
            Hypothesis::Ame => &[Method::DB, Method::CAlpha, Method::SI, Method::SI2, Method::TSvy],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub scheme: SchemeKind,
    /// Regressor success probability; `None` picks 0.5 (standard) or 0.4 (exogenous).
    pub prob: Option<f64>,
    pub population_size: usize,
    /// Standard-scheme block sizes; must sum to `population_size`.
    pub strata_sizes: Vec<usize>,
    /// Draws per stratum, so `n = 4·per_stratum`.
    pub per_stratum: usize,
    pub p_grid: Vec<usize>,
    pub replications: usize,
    pub zeta: f64,
    /// Slope index of the tested coefficient and AME.
    pub target: usize,
    pub coef_null: f64,
    pub ame_null: f64,
    pub lambda: LambdaPolicy,
    pub cv_folds: usize,
    pub cv_loss: CvLoss,
    pub cv_rule: CvRule,
    pub cv_grid_size: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Draw a fresh population in every replication instead of one per `p`.
    pub regenerate_population: bool,
    /// Worker threads; 0 uses the global default.
    pub workers: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scheme: SchemeKind::Standard,
            prob: None,
            population_size: 10_000,
            strata_sizes: vec![1000, 2000, 3000, 4000],
            per_stratum: 50,
            p_grid: vec![2, 5, 10, 20, 50, 100],
            replications: 1000,
            zeta: 0.05,
            target: 1,
            coef_null: 1.0,
            ame_null: 0.11,
            lambda: LambdaPolicy::Cv,
            cv_folds: 10,
            cv_loss: CvLoss::Auc,
            cv_rule: CvRule::OneSe,
            cv_grid_size: 100,
            methods: Method::ALL.to_vec(),
            seed: 20_240_101,
            regenerate_population: true,
            workers: 0,
        }
    }
}

impl SimulationConfig {
    pub fn prob(&self) -> f64 {
        self.prob.unwrap_or(match self.scheme {
            SchemeKind::Standard => 0.5,
            SchemeKind::Exogenous => 0.4,
        })
    }

    pub fn sample_size(&self) -> usize {
        4 * self.per_stratum
    }

    pub fn stratification(&self) -> Result<StratificationScheme> {
        match self.scheme {
            SchemeKind::Standard => StratificationScheme::standard(self.strata_sizes.clone()),
            SchemeKind::Exogenous => StratificationScheme::exogenous(self.prob()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta < 1.0) {
            return Err(Error::Argument(format!("zeta must lie in (0, 1), got {}", self.zeta)));
        }
        if self.per_stratum == 0 || self.replications == 0 {
            return Err(Error::Argument("per_stratum and replications must be positive".into()));
        }
        if self.p_grid.is_empty() {
            return Err(Error::Argument("p_grid is empty".into()));
        }
        for &p in &self.p_grid {
            if p < 2 || self.target > p || self.target == 0 {
                return Err(Error::Argument(format!("p = {p} cannot hold target slope {}", self.target)));
            }
        }
        let scheme = self.stratification()?;
        if scheme.kind == SchemeKind::Standard && self.strata_sizes.iter().sum::<usize>() != self.population_size {
            return Err(Error::Argument(format!(
                "strata_sizes sum to {}, population_size is {}",
                self.strata_sizes.iter().sum::<usize>(),
                self.population_size
            )));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based stream seed from the master seed and a path of labels.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

const STREAM_POPULATION: u64 = 1;
const STREAM_SAMPLE: u64 = 2;
const STREAM_CV: u64 = 3;
const POPULATION_RETRIES: u64 = 20;

#[derive(Clone, Debug, PartialEq)]
enum Status {
    Reject,
    Accept,
    NotApplicable,
    Failed(&'static str),
}

#[derive(Clone, Debug)]
struct CellOutcome {
    hypothesis: Hypothesis,
    method: Method,
    status: Status,
    pseudo_inverse: bool,
}

#[derive(Clone, Debug, Default)]
struct ReplicationOutcome {
    cells: Vec<CellOutcome>,
    lambda: Option<f64>,
    active_slopes: usize,
    lasso_error: Option<&'static str>,
    kkt_violation: bool,
    tsvy_not_converged: bool,
    population_redraws: u64,
}

fn classify(r: Result<InferenceResult>) -> (Status, bool) {
    match r {
        Ok(res) if res.p_value.is_nan() => (Status::Failed("nan_p_value"), res.pseudo_inverse_used),
        Ok(res) => (
            if res.rejects() { Status::Reject } else { Status::Accept },
            res.pseudo_inverse_used,
        ),
        Err(Error::NotApplicable(_)) => (Status::NotApplicable, false),
        Err(e) => (Status::Failed(e.kind()), false),
    }
}

fn draw_population(cfg: &SimulationConfig, scheme: &StratificationScheme, p: usize, base: &[u64]) -> Result<(Population, u64)> {
    let theta0 = default_theta0(p);
    for attempt in 0..POPULATION_RETRIES {
        let mut path = base.to_vec();
        path.extend_from_slice(&[STREAM_POPULATION, attempt]);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &path));
        let pop = generate_population(cfg.population_size, p, cfg.prob(), &theta0, &mut rng)?;
        if scheme.members(&pop)?.iter().all(|g| !g.is_empty()) {
            return Ok((pop, attempt));
        }
    }
    Err(Error::Data(format!(
        "a stratum stayed empty after {POPULATION_RETRIES} population draws"
    )))
}

struct Replication<'a> {
    cfg: &'a SimulationConfig,
    ds: Dataset,
    fit: Option<LassoFit>,
    event: Option<Result<SelectionEvent>>,
}

impl Replication<'_> {
    fn wants(&self, m: Method) -> bool {
        self.cfg.methods.contains(&m)
    }

    fn event(&mut self) -> Result<&SelectionEvent> {
        if self.event.is_none() {
            let fit = self.fit.as_ref().expect("event requested without a fit");
            self.event = Some(build_selection_event(&self.ds, &Logit, fit));
        }
        match self.event.as_ref().unwrap() {
            Ok(ev) => Ok(ev),
            Err(e) => Err(e.clone()),
        }
    }
}

fn run_one(cfg: &SimulationConfig, scheme: &StratificationScheme, fixed_pop: Option<&Population>, p: usize, rep: usize) -> ReplicationOutcome {
    let mut out = ReplicationOutcome::default();
    let base = [p as u64, rep as u64];
    let fail_all = |out: &mut ReplicationOutcome, kind: &'static str| {
        for h in [Hypothesis::Coefficient, Hypothesis::Ame] {
            for &m in h.methods() {
                if cfg.methods.contains(&m) {
                    out.cells.push(CellOutcome { hypothesis: h, method: m, status: Status::Failed(kind), pseudo_inverse: false });
                }
            }
        }
    };

    let owned;
    let pop = match fixed_pop {
        Some(pop) => pop,
        None => match draw_population(cfg, scheme, p, &base) {
            Ok((pop, redraws)) => {
                out.population_redraws = redraws;
                owned = pop;
                &owned
            }
            Err(e) => {
                fail_all(&mut out, e.kind());
                return out;
            }
        },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[p as u64, rep as u64, STREAM_SAMPLE]));
    let ds = match draw_sample(pop, scheme, cfg.per_stratum, &mut rng) {
        Ok(ds) => ds,
        Err(e) => {
            fail_all(&mut out, e.kind());
            return out;
        }
    };
    let j = cfg.target;
    let zeta = cfg.zeta;

    let opts = SolverOptions::default();
    let fit = (|| -> Result<LassoFit> {
        let lam = match cfg.lambda {
            LambdaPolicy::Fixed(v) => v,
            LambdaPolicy::Cv => {
                let spec = CvSpec {
                    folds: cfg.cv_folds,
                    loss: cfg.cv_loss,
                    rule: cfg.cv_rule,
                    grid_size: cfg.cv_grid_size,
                    seed: derive_seed(cfg.seed, &[p as u64, rep as u64, STREAM_CV]),
                    solver: opts.clone(),
                    ..CvSpec::default()
                };
                cv_select_lambda(&ds, &Logit, &spec)?.lambda
            }
        };
        fit_penalized_with(&ds, &Logit, lam, &opts, None)
    })();
    match &fit {
        Ok(f) => {
            out.lambda = Some(f.lambda);
            out.active_slopes = f.active.len() - 1;
            out.kkt_violation = kkt_certificate(&ds, &Logit, f).map(|r| r.violated).unwrap_or(true);
        }
        Err(e) => out.lasso_error = Some(e.kind()),
    }
    let lasso_kind = out.lasso_error;
    let mut rep_state = Replication { cfg, ds, fit: fit.ok(), event: None };

    let glm = if rep_state.wants(Method::TSvy) {
        let g = survey_glm(&rep_state.ds, &Logit);
        if let Ok(g) = &g {
            out.tsvy_not_converged = !g.converged;
        }
        Some(g)
    } else {
        None
    };

    for h in [Hypothesis::Coefficient, Hypothesis::Ame] {
        for &m in h.methods() {
            if !rep_state.wants(m) {
                continue;
            }
            let (status, pinv) = if m == Method::TSvy {
                let g = glm.as_ref().unwrap();
                classify(match g {
                    Ok(g) => match h {
                        Hypothesis::Coefficient => tsvy_wald(&rep_state.ds, &Logit, g, &Coordinate(j), cfg.coef_null, zeta),
                        Hypothesis::Ame => tsvy_wald(&rep_state.ds, &Logit, g, &Ame(j), cfg.ame_null, zeta),
                    },
                    Err(e) => Err(e.clone()),
                })
            } else if let Some(kind) = lasso_kind {
                (Status::Failed(kind), false)
            } else {
                classify(lasso_test(&mut rep_state, h, m))
            };
            out.cells.push(CellOutcome { hypothesis: h, method: m, status, pseudo_inverse: pinv });
        }
    }
    out
}

fn lasso_test(st: &mut Replication<'_>, h: Hypothesis, m: Method) -> Result<InferenceResult> {
    let cfg = st.cfg;
    let (j, zeta) = (cfg.target, cfg.zeta);
    let fit = st.fit.clone().expect("lasso fit present");
    match (h, m) {
        (Hypothesis::Coefficient, Method::DB) => db_wald(&st.ds, &Logit, &fit, &Coordinate(j), cfg.coef_null, zeta),
        (Hypothesis::Coefficient, Method::CAlpha) => {
            let aux = auxiliary_coordinate_pin(&st.ds, &Logit, &fit, j, cfg.coef_null)?;
            c_alpha_test(&st.ds, &Logit, &aux, &Coordinate(j), cfg.coef_null, zeta)
        }
        (Hypothesis::Coefficient, Method::SI) => {
            if !fit.is_active(j) {
                return Err(Error::NotApplicable(format!("slope {j} not selected")));
            }
            si_ci_coordinate(st.event()?, j, cfg.coef_null, zeta)
        }
        (Hypothesis::Ame, Method::DB) => db_wald(&st.ds, &Logit, &fit, &Ame(j), cfg.ame_null, zeta),
        (Hypothesis::Ame, Method::CAlpha) => {
            let aux = auxiliary_ame_solve(&st.ds, &fit, j, cfg.ame_null)?;
            c_alpha_test(&st.ds, &Logit, &aux, &Ame(j), cfg.ame_null, zeta)
        }
        (Hypothesis::Ame, Method::SI | Method::SI2) => {
            if !fit.is_active(j) {
                return Err(Error::NotApplicable(format!("slope {j} not selected")));
            }
            let ds = st.ds.clone();
            let ev = st.event()?;
            ame_si(&ds, ev, &fit.theta, j, m == Method::SI, cfg.ame_null, zeta)
        }
        _ => Err(Error::Argument(format!("{m} is not run for {h:?}"))),
    }
}

/// Tally for one test, hypothesis and dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionCell {
    pub hypothesis: Hypothesis,
    pub p: usize,
    pub method: Method,
    pub replications: usize,
    pub rejections: usize,
    /// Replications in which the test produced a decision.
    pub applicable: usize,
    /// Selective tests when the target slope was not selected.
    pub not_applicable: usize,
    pub failures: BTreeMap<String, usize>,
    pub pseudo_inverse: usize,
    /// `100 · rejections / applicable`.
    pub percent: Option<f64>,
    /// `100 · rejections / (applicable + not_applicable)`, counting
    /// unselected draws as non-rejections.
    pub percent_all: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionDiagnostics {
    pub p: usize,
    pub lasso_failures: BTreeMap<String, usize>,
    pub kkt_violations: usize,
    pub tsvy_not_converged: usize,
    pub population_redraws: u64,
    pub mean_lambda: Option<f64>,
    pub mean_active_slopes: Option<f64>,
    /// Share of replications with the target slope selected.
    pub selection_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionTable {
    pub config: SimulationConfigEcho,
    pub cells: Vec<RejectionCell>,
    pub diagnostics: Vec<DimensionDiagnostics>,
}

/// The fields of the configuration that determine the numbers in the table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfigEcho {
    pub scheme: SchemeKind,
    pub prob: f64,
    pub n: usize,
    pub replications: usize,
    pub zeta: f64,
    pub target: usize,
    pub coef_null: f64,
    pub ame_null: f64,
    pub lambda: String,
    pub seed: u64,
    pub regenerate_population: bool,
}

impl RejectionTable {
    pub fn cell(&self, h: Hypothesis, method: Method, p: usize) -> Option<&RejectionCell> {
        self.cells.iter().find(|c| c.hypothesis == h && c.method == method && c.p == p)
    }

    pub fn p_grid(&self) -> Vec<usize> {
        self.diagnostics.iter().map(|d| d.p).collect()
    }

    /// Rejection percentages laid out as tests by `p`, one block per hypothesis.
    pub fn to_wide_csv(&self) -> Result<String> {
        let grid = self.p_grid();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["hypothesis".to_string(), "test".to_string()];
        header.extend(grid.iter().map(|p| format!("p={p}")));
        w.write_record(&header).map_err(csv_err)?;
        for h in [Hypothesis::Coefficient, Hypothesis::Ame] {
            for &m in h.methods() {
                if !self.cells.iter().any(|c| c.hypothesis == h && c.method == m) {
                    continue;
                }
                let mut row = vec![self.hypothesis_label(h), m.label().to_string()];
                for &p in &grid {
                    row.push(match self.cell(h, m, p).and_then(|c| c.percent) {
                        Some(v) => format!("{v:.1}"),
                        None => "-".into(),
                    });
                }
                w.write_record(&row).map_err(csv_err)?;
            }
        }
        finish_csv(w)
    }

    /// One row per cell with exact counts.
    pub fn to_long_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "hypothesis", "test", "p", "replications", "rejections", "applicable", "not_applicable",
            "failures", "pseudo_inverse", "percent", "percent_all",
        ])
        .map_err(csv_err)?;
        for c in &self.cells {
            let fails: usize = c.failures.values().sum();
            w.write_record([
                self.hypothesis_label(c.hypothesis),
                c.method.label().to_string(),
                c.p.to_string(),
                c.replications.to_string(),
                c.rejections.to_string(),
                c.applicable.to_string(),
                c.not_applicable.to_string(),
                fails.to_string(),
                c.pseudo_inverse.to_string(),
                opt(c.percent),
                opt(c.percent_all),
            ])
            .map_err(csv_err)?;
        }
        finish_csv(w)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numeric(format!("serializing table: {e}")))
    }

    fn hypothesis_label(&self, h: Hypothesis) -> String {
        match h {
            Hypothesis::Coefficient => format!("theta[{}]={}", self.config.target, self.config.coef_null),
            Hypothesis::Ame => format!("AME[{}]={}", self.config.target, self.config.ame_null),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Numeric(format!("writing csv: {e}"))
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Numeric(format!("writing csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Numeric(e.to_string()))
}

fn aggregate(cfg: &SimulationConfig, p: usize, outs: &[ReplicationOutcome]) -> (Vec<RejectionCell>, DimensionDiagnostics) {
    let mut cells = Vec::new();
    for h in [Hypothesis::Coefficient, Hypothesis::Ame] {
        for &m in h.methods() {
            if !cfg.methods.contains(&m) {
                continue;
            }
            let mut c = RejectionCell {
                hypothesis: h,
                p,
                method: m,
                replications: outs.len(),
                rejections: 0,
                applicable: 0,
                not_applicable: 0,
                failures: BTreeMap::new(),
                pseudo_inverse: 0,
                percent: None,
                percent_all: None,
            };
            for o in outs {
                let Some(cell) = o.cells.iter().find(|x| x.hypothesis == h && x.method == m) else {
                    continue;
                };
                c.pseudo_inverse += usize::from(cell.pseudo_inverse);
                match &cell.status {
                    Status::Reject => {
                        c.rejections += 1;
                        c.applicable += 1;
                    }
                    Status::Accept => c.applicable += 1,
                    Status::NotApplicable => c.not_applicable += 1,
                    Status::Failed(k) => *c.failures.entry((*k).to_string()).or_default() += 1,
                }
            }
            if c.applicable > 0 {
                c.percent = Some(100.0 * c.rejections as f64 / c.applicable as f64);
            }
            let denom = c.applicable + c.not_applicable;
            if denom > 0 {
                c.percent_all = Some(100.0 * c.rejections as f64 / denom as f64);
            }
            cells.push(c);
        }
    }
    let mut lasso_failures = BTreeMap::new();
    let (mut lam_sum, mut act_sum, mut fitted, mut selected) = (0.0, 0.0, 0usize, 0usize);
    for o in outs {
        if let Some(k) = o.lasso_error {
            *lasso_failures.entry(k.to_string()).or_default() += 1;
        }
        if let Some(l) = o.lambda {
            lam_sum += l;
            act_sum += o.active_slopes as f64;
            fitted += 1;
        }
        let si_applicable = o
            .cells
            .iter()
            .any(|c| c.method == Method::SI && c.status != Status::NotApplicable && !matches!(c.status, Status::Failed(_)));
        selected += usize::from(si_applicable);
    }
    let diag = DimensionDiagnostics {
        p,
        lasso_failures,
        kkt_violations: outs.iter().filter(|o| o.lambda.is_some() && o.kkt_violation).count(),
        tsvy_not_converged: outs.iter().filter(|o| o.tsvy_not_converged).count(),
        population_redraws: outs.iter().map(|o| o.population_redraws).sum(),
        mean_lambda: (fitted > 0).then(|| lam_sum / fitted as f64),
        mean_active_slopes: (fitted > 0).then(|| act_sum / fitted as f64),
        selection_rate: cfg
            .methods
            .contains(&Method::SI)
            .then(|| selected as f64 / outs.len() as f64),
    };
    (cells, diag)
}

/// Progress notifications from [`run_rejection_study_with`].
#[derive(Clone, Copy, Debug)]
pub struct Progress {
    pub p: usize,
    /// 1-based position of `p` in the grid.
    pub dimension: usize,
    pub total_dimensions: usize,
    /// Replications finished so far for this `p`, in completion order.
    pub done: usize,
    pub replications: usize,
}

pub fn run_rejection_study(cfg: &SimulationConfig) -> Result<RejectionTable> {
    run_rejection_study_with(cfg, &|_| {})
}

/// Run every replication for every `p` in the grid. Results depend only on
/// the configuration, never on the number of workers.
pub fn run_rejection_study_with(cfg: &SimulationConfig, progress: &(dyn Fn(Progress) + Sync)) -> Result<RejectionTable> {
    cfg.validate()?;
    let scheme = cfg.stratification()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Argument(format!("thread pool: {e}")))?;
    let mut cells = Vec::new();
    let mut diagnostics = Vec::new();
    for (k, &p) in cfg.p_grid.iter().enumerate() {
        let fixed = if cfg.regenerate_population {
            None
        } else {
            Some(draw_population(cfg, &scheme, p, &[p as u64, u64::MAX])?.0)
        };
        let done = AtomicUsize::new(0);
        let outs: Vec<ReplicationOutcome> = pool.install(|| {
            (0..cfg.replications)
                .into_par_iter()
                .map(|r| {
                    let out = run_one(cfg, &scheme, fixed.as_ref(), p, r);
                    progress(Progress {
                        p,
                        dimension: k + 1,
                        total_dimensions: cfg.p_grid.len(),
                        done: done.fetch_add(1, Ordering::Relaxed) + 1,
                        replications: cfg.replications,
                    });
                    out
                })
                .collect()
        });
        let (c, d) = aggregate(cfg, p, &outs);
        cells.extend(c);
        diagnostics.push(d);
    }
    Ok(RejectionTable {
        config: SimulationConfigEcho {
            scheme: cfg.scheme,
            prob: cfg.prob(),
            n: cfg.sample_size(),
            replications: cfg.replications,
            zeta: cfg.zeta,
            target: cfg.target,
            coef_null: cfg.coef_null,
            ame_null: cfg.ame_null,
            lambda: cfg.lambda.to_string(),
            seed: cfg.seed,
            regenerate_population: cfg.regenerate_population,
        },
        cells,
        diagnostics,
    })
}
