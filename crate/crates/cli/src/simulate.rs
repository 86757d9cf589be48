use std::path::PathBuf;
use std::sync::Mutex;

use clap::Args;
use serde::Serialize;
use svylasso::sim::{run_rejection_study_with, Progress, SimulationConfig};

use crate::config;
use crate::error::{CliError, CliResult};

/// Output file names inside the `--out` directory.
pub const WIDE_CSV: &str = "rejection_wide.csv";
pub const LONG_CSV: &str = "rejection_long.csv";
pub const JSON: &str = "rejection.json";

#[derive(Args, Serialize, Debug, Default)]
pub struct SimulateFlags {
    /// TOML study configuration; any flag overrides the key of the same name
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Directory for the result tables
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// No progress on stderr
    #[arg(long)]
    #[serde(skip)]
    pub quiet: bool,
    /// `standard` or `exogenous`
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prob: Option<f64>,
    #[arg(long, alias = "population_size")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population_size: Option<usize>,
    #[arg(long, alias = "strata_sizes", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strata_sizes: Option<Vec<usize>>,
    #[arg(long, alias = "per_stratum")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_stratum: Option<usize>,
    #[arg(long, alias = "p_grid", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<usize>,
    #[arg(long, alias = "coef_null")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coef_null: Option<f64>,
    #[arg(long, alias = "ame_null")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ame_null: Option<f64>,
    /// `cv` or a fixed penalty
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<String>,
    #[arg(long, alias = "cv_folds")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_folds: Option<usize>,
    #[arg(long, alias = "cv_loss")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_loss: Option<String>,
    #[arg(long, alias = "cv_rule")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_rule: Option<String>,
    #[arg(long, alias = "cv_grid_size")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_grid_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    /// Master seed; every random stream is derived from it
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, alias = "regenerate_population")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regenerate_population: Option<bool>,
    /// Worker threads (0 = all cores); also read from SVYLASSO_THREADS
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

pub fn resolve(flags: &SimulateFlags) -> CliResult<SimulationConfig> {
    let mut t = config::read_table(flags.config.as_deref())?;
    if let Some(n) = config::threads_from_env()? {
        t.insert("workers".into(), toml::Value::Integer(n as i64));
    }
    config::overlay(&mut t, flags)?;
    let cfg: SimulationConfig = config::finish(t, "simulation")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(flags: &SimulateFlags) -> CliResult<()> {
    let out = flags
        .out
        .as_ref()
        .ok_or_else(|| CliError::User("pass --out DIR for the result tables".into()))?;
    let cfg = resolve(flags)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("cannot create `{}`: {e}", out.display())))?;
    let last = Mutex::new(0usize);
    let quiet = flags.quiet;
    let report = |p: Progress| {
        if quiet {
            return;
        }
        // about twenty lines per dimension
        let step = (p.replications / 20).max(1);
        let mut l = last.lock().unwrap();
        if p.done == p.replications || p.done >= *l + step || p.done < *l {
            *l = p.done;
            eprintln!(
                "p={} ({}/{}): {}/{} replications",
                p.p, p.dimension, p.total_dimensions, p.done, p.replications
            );
        }
    };
    let table = run_rejection_study_with(&cfg, &report)?;
    let write = |name: &str, text: String| {
        let path = out.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write `{}`: {e}", path.display())))
    };
    let wide = table.to_wide_csv()?;
    write(WIDE_CSV, wide.clone())?;
    write(LONG_CSV, table.to_long_csv()?)?;
    write(JSON, table.to_json()?)?;
    print!("{wide}");
    Ok(())
}
