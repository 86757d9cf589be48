//! Per-variable estimates and p-values. Coefficient tables have the columns
//! GLM, Lasso, DB, SI estimates followed by t_svy, DB, C(alpha), SI p-values;
//! AME tables drop the Lasso column. Cells that were not computed hold `-`.

use clap::Args;
use serde::Serialize;
use svylasso::ame::{ame_estimate, ame_infer, ame_si, check_binary_column, Ame};
use svylasso::calpha::{auxiliary_coordinate_pin, c_alpha_test};
use svylasso::debiased::{db_one_step, db_rho, db_wald, survey_glm, tsvy_wald, SurveyGlmFit};
use svylasso::glm::{Dataset, Logit};
use svylasso::lasso::LassoFit;
use svylasso::param::Coordinate;
use svylasso::selective::{build_selection_event, si_ci_coordinate, SelectionEvent};
use svylasso::{InferenceResult, Method};

use crate::error::{CliError, CliResult};
use crate::model::{emit, fit_model, ModelSettings, OutputFormat};

#[derive(Args, Serialize, Debug, Default)]
pub struct InferFlags {
    /// Comma-separated tests from db, ca, si, si2, tsvy
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    /// Test size; intervals in the JSON output have coverage 1 - level
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    /// Null value used by every test
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null: Option<f64>,
    /// Test average marginal effects of the binary covariates
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ame: Option<bool>,
    /// `csv` table or `json` with intervals and diagnostics
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Skipped {
    pub method: Method,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub variable: String,
    pub glm: Option<f64>,
    /// Absent in AME tables.
    pub lasso: Option<f64>,
    pub db: Option<f64>,
    pub si: Option<f64>,
    pub tests: Vec<InferenceResult>,
    pub skipped: Vec<Skipped>,
}

impl Row {
    fn p_value(&self, m: Method) -> Option<f64> {
        self.tests.iter().find(|t| t.method == m).map(|t| t.p_value)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InferReport {
    pub target: &'static str,
    pub lambda: f64,
    pub level: f64,
    pub null: f64,
    pub methods: Vec<Method>,
    pub rows: Vec<Row>,
}

struct Ctx<'a> {
    ds: &'a Dataset,
    fit: &'a LassoFit,
    glm: Option<SurveyGlmFit>,
    event: Option<Result<SelectionEvent, String>>,
    s: &'a ModelSettings,
}

impl Ctx<'_> {
    fn wants(&self, m: Method) -> bool {
        self.s.methods.contains(&m)
    }

    fn event(&mut self) -> Result<&SelectionEvent, String> {
        if self.event.is_none() {
            self.event = Some(build_selection_event(self.ds, &Logit, self.fit).map_err(|e| e.to_string()));
        }
        self.event.as_ref().unwrap().as_ref().map_err(Clone::clone)
    }
}

fn record(row: &mut Row, m: Method, r: svylasso::Result<InferenceResult>) {
    match r {
        Ok(t) => row.tests.push(t),
        Err(e) => row.skipped.push(Skipped { method: m, reason: e.to_string() }),
    }
}

fn coefficient_row(cx: &mut Ctx, j: usize, name: &str, db_est: Option<f64>) -> Row {
    let (ds, fit, null, z) = (cx.ds, cx.fit, cx.s.null, cx.s.level);
    let mut row = Row {
        variable: name.to_string(),
        glm: cx.glm.as_ref().map(|g| g.theta[j]),
        lasso: Some(fit.theta[j]),
        db: db_est,
        si: None,
        tests: Vec::new(),
        skipped: Vec::new(),
    };
    if cx.wants(Method::TSvy) {
        if let Some(g) = &cx.glm {
            record(&mut row, Method::TSvy, tsvy_wald(ds, &Logit, g, &Coordinate(j), null, z));
        }
    }
    if cx.wants(Method::DB) {
        record(&mut row, Method::DB, db_wald(ds, &Logit, fit, &Coordinate(j), null, z));
    }
    if cx.wants(Method::CAlpha) {
        let r = auxiliary_coordinate_pin(ds, &Logit, fit, j, null)
            .and_then(|aux| c_alpha_test(ds, &Logit, &aux, &Coordinate(j), null, z));
        record(&mut row, Method::CAlpha, r);
    }
    if cx.wants(Method::SI) && j > 0 && fit.is_active(j) {
        match cx.event() {
            Ok(ev) => {
                let r = si_ci_coordinate(ev, j, null, z);
                if let Ok(t) = &r {
                    row.si = Some(t.estimate);
                }
                record(&mut row, Method::SI, r);
            }
            Err(reason) => row.skipped.push(Skipped { method: Method::SI, reason }),
        }
    }
    row
}

fn ame_row(cx: &mut Ctx, j: usize, name: &str) -> Row {
    let (ds, fit, null, z) = (cx.ds, cx.fit, cx.s.null, cx.s.level);
    let mut row = Row {
        variable: name.to_string(),
        glm: cx.glm.as_ref().and_then(|g| ame_estimate(ds, &g.theta, j).ok()),
        lasso: None,
        db: None,
        si: None,
        tests: Vec::new(),
        skipped: Vec::new(),
    };
    if cx.wants(Method::TSvy) {
        if let Some(g) = &cx.glm {
            record(&mut row, Method::TSvy, tsvy_wald(ds, &Logit, g, &Ame(j), null, z));
        }
    }
    if cx.wants(Method::DB) {
        row.db = db_rho(ds, &Logit, fit, &Ame(j)).ok().map(|v| v[0]);
        record(&mut row, Method::DB, ame_infer(ds, &Logit, fit, j, Method::DB, null, z));
    }
    if cx.wants(Method::CAlpha) {
        record(&mut row, Method::CAlpha, ame_infer(ds, &Logit, fit, j, Method::CAlpha, null, z));
    }
    for (m, sign) in [(Method::SI, true), (Method::SI2, false)] {
        if !cx.wants(m) || !fit.is_active(j) {
            continue;
        }
        match cx.event() {
            Ok(ev) => {
                let r = ame_si(ds, ev, &fit.theta, j, sign, null, z);
                if let (Ok(t), Method::SI) = (&r, m) {
                    row.si = Some(t.estimate);
                }
                record(&mut row, m, r);
            }
            Err(reason) => row.skipped.push(Skipped { method: m, reason }),
        }
    }
    row
}

pub fn report(s: &ModelSettings) -> CliResult<InferReport> {
    let f = fit_model(s)?;
    let ds = &f.data.dataset;
    let names = f.data.coefficient_names();
    let glm = match survey_glm(ds, &Logit) {
        Ok(g) => Some(g),
        Err(e) => {
            eprintln!("warning: unpenalized survey GLM unavailable: {e}");
            None
        }
    };
    let mut cx = Ctx { ds, fit: &f.fit, glm, event: None, s };
    let mut rows = Vec::new();
    if s.ame {
        for j in 1..names.len() {
            if check_binary_column(ds, j).is_ok() {
                rows.push(ame_row(&mut cx, j, &names[j]));
            }
        }
        if rows.is_empty() {
            return Err(CliError::User("AME tables need at least one 0/1 covariate".into()));
        }
    } else {
        let db = if s.methods.contains(&Method::DB) {
            match db_one_step(ds, &Logit, &f.fit) {
                Ok(v) => Some(v),
                Err(e) => {
                    eprintln!("warning: debiased estimate unavailable: {e}");
                    None
                }
            }
        } else {
            None
        };
        for (j, name) in names.iter().enumerate() {
            rows.push(coefficient_row(&mut cx, j, name, db.as_ref().map(|v| v[j])));
        }
    }
    for r in &rows {
        for sk in &r.skipped {
            if !sk.reason.starts_with("not applicable") {
                eprintln!("warning: {} for `{}`: {}", sk.method, r.variable, sk.reason);
            }
        }
    }
    Ok(InferReport {
        target: if s.ame { "ame" } else { "coefficient" },
        lambda: f.fit.lambda,
        level: s.level,
        null: s.null,
        methods: s.methods.clone(),
        rows,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

pub fn to_csv(r: &InferReport) -> CliResult<String> {
    let ame = r.target == "ame";
    let with_si2 = ame && r.methods.contains(&Method::SI2);
    let mut header = vec!["variable", "GLM"];
    if !ame {
        header.push("Lasso");
    }
    header.extend(["DB", "SI", "p_tsvy", "p_DB", "p_Calpha", "p_SI"]);
    if with_si2 {
        header.push("p_SI2");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(&header).map_err(io)?;
    for row in &r.rows {
        let mut rec = vec![row.variable.clone(), cell(row.glm)];
        if !ame {
            rec.push(cell(row.lasso));
        }
        rec.push(cell(row.db));
        rec.push(cell(row.si));
        for m in [Method::TSvy, Method::DB, Method::CAlpha, Method::SI] {
            rec.push(cell(row.p_value(m)));
        }
        if with_si2 {
            rec.push(cell(row.p_value(Method::SI2)));
        }
        w.write_record(&rec).map_err(io)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.to_string()))?)
        .map_err(|e| CliError::Io(e.to_string()))
}

pub fn run(s: &ModelSettings) -> CliResult<()> {
    if s.methods.is_empty() {
        return Err(CliError::User("no methods requested".into()));
    }
    let r = report(s)?;
    let text = match s.format {
        OutputFormat::Csv => to_csv(&r)?,
        OutputFormat::Json => serde_json::to_string_pretty(&r).expect("report serializes") + "\n",
    };
    emit(s.out.as_deref(), &text)
}
