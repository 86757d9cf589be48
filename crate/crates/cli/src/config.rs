//! Layered settings: a flat TOML file, then environment, then flags.
//! Keys are the snake_case flag names, so `--cv-folds 5` overrides
//! `cv_folds = 10` in the file.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::Table;

use crate::error::{CliError, CliResult};

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "SVYLASSO_THREADS";

pub fn read_table(path: Option<&Path>) -> CliResult<Table> {
    let Some(path) = path else {
        return Ok(Table::new());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::User(format!("cannot read config `{}`: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| CliError::User(format!("config `{}`: {e}", path.display())))
}

/// Copy every key set in `flags` over `base`.
pub fn overlay<F: Serialize>(base: &mut Table, flags: &F) -> CliResult<()> {
    let t = Table::try_from(flags).map_err(|e| CliError::User(format!("flags: {e}")))?;
    base.extend(t);
    Ok(())
}

/// Worker count from the environment, if set.
pub fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::User(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

pub fn finish<T: DeserializeOwned>(table: Table, what: &str) -> CliResult<T> {
    T::deserialize(table).map_err(|e| CliError::User(format!("{what} settings: {e}")))
}
