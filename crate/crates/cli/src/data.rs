//! CSV ingestion. Every cell must hold a finite number; there is no
//! imputation, so a blank or `NA` cell stops the run with its coordinates.

use std::path::Path;

use svylasso::glm::Dataset;

use crate::error::{CliError, CliResult};

/// Numeric columns read from a CSV file with a header row.
#[derive(Debug, Clone)]
pub struct Frame {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Frame {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    fn index(&self, name: &str) -> CliResult<usize> {
        self.names.iter().position(|n| n == name).ok_or_else(|| {
            CliError::User(format!("column `{name}` not found; available columns: {}", self.names.join(", ")))
        })
    }
}

pub fn read_csv(path: &Path) -> CliResult<Frame> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::User(format!("cannot open `{}`: {e}", path.display())))?;
    read_frame(file, &path.display().to_string())
}

pub fn read_frame<R: std::io::Read>(input: R, label: &str) -> CliResult<Frame> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::User(format!("{label}: cannot read header row: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(CliError::User(format!("{label}: header row is empty")));
    }
    for (k, n) in names.iter().enumerate() {
        if n.is_empty() {
            return Err(CliError::User(format!("{label}: header cell {} is blank", k + 1)));
        }
        if names[..k].contains(n) {
            return Err(CliError::User(format!("{label}: duplicate column name `{n}`")));
        }
    }
    let mut columns = vec![Vec::new(); names.len()];
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| CliError::User(format!("{label}: data row {row}: {e}")))?;
        for (c, cell) in rec.iter().enumerate() {
            let t = cell.trim();
            if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
                return Err(CliError::User(format!(
                    "{label}: missing value at data row {row}, column `{}`",
                    names[c]
                )));
            }
            let v: f64 = t.parse().map_err(|_| {
                CliError::User(format!(
                    "{label}: cannot parse `{t}` as a number at data row {row}, column `{}`",
                    names[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(CliError::User(format!(
                    "{label}: non-finite value at data row {row}, column `{}`",
                    names[c]
                )));
            }
            columns[c].push(v);
        }
    }
    Ok(Frame { names, columns })
}

/// Model inputs selected from a frame.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub dataset: Dataset,
    /// Covariate names in column order, without the intercept.
    pub covariates: Vec<String>,
}

impl ModelData {
    /// Coefficient names including the leading intercept.
    pub fn coefficient_names(&self) -> Vec<String> {
        std::iter::once("(Intercept)".to_string()).chain(self.covariates.iter().cloned()).collect()
    }
}

/// Pick outcome, weights and covariates. Without an explicit covariate list
/// every remaining column is used; without a weight column all weights are 1.
pub fn model_data(
    frame: &Frame,
    outcome: &str,
    weights: Option<&str>,
    covariates: Option<&[String]>,
) -> CliResult<ModelData> {
    if frame.rows() == 0 {
        return Err(CliError::User("the data file has no rows".into()));
    }
    let yi = frame.index(outcome)?;
    let wi = weights.map(|w| frame.index(w)).transpose()?;
    if wi == Some(yi) {
        return Err(CliError::User("outcome and weight columns must differ".into()));
    }
    let names: Vec<String> = match covariates {
        Some(list) => list.to_vec(),
        None => frame
            .names
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != yi && Some(*k) != wi)
            .map(|(_, n)| n.clone())
            .collect(),
    };
    let mut cols = Vec::with_capacity(names.len());
    for (k, n) in names.iter().enumerate() {
        if names[..k].contains(n) {
            return Err(CliError::User(format!("covariate `{n}` listed twice")));
        }
        let c = frame.index(n)?;
        if c == yi || Some(c) == wi {
            return Err(CliError::User(format!("`{n}` cannot be both a covariate and the outcome or weight")));
        }
        cols.push(c);
    }
    let y = frame.columns[yi].clone();
    if let Some(r) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(CliError::User(format!(
            "outcome `{outcome}` must be 0 or 1; found {} at data row {}",
            y[r],
            r + 1
        )));
    }
    let w = match wi {
        Some(c) => {
            let w = frame.columns[c].clone();
            if let Some(r) = w.iter().position(|&v| !(v > 0.0)) {
                return Err(CliError::User(format!(
                    "weight column `{}` must be positive; found {} at data row {}",
                    frame.names[c],
                    w[r],
                    r + 1
                )));
            }
            w
        }
        None => vec![1.0; frame.rows()],
    };
    let rows: Vec<Vec<f64>> = (0..frame.rows())
        .map(|i| cols.iter().map(|&c| frame.columns[c][i]).collect())
        .collect();
    let dataset = Dataset::from_covariates(y, &rows, w)?;
    Ok(ModelData { dataset, covariates: names })
}
