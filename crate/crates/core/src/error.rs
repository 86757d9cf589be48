use thiserror::Error;

/// Errors raised by fitting and inference routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("matrix block `{block}` is singular or not positive definite")]
    Singular { block: String },

    #[error("solver did not converge after {iterations} iterations (last max change {last_change:.3e})")]
    NotConverged {
        iterations: usize,
        last_change: f64,
        last_iterate: Vec<f64>,
    },

    #[error("truncation interval carries no probability mass at this mean; widen the bracket")]
    TailDegenerate,

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("restriction cannot be satisfied: {0}")]
    Infeasible(String),
}

impl Error {
    /// True for failures caused by user input rather than numerics.
    pub fn is_user_error(&self) -> bool {
        matches!(self, Error::Argument(_) | Error::Data(_))
    }

    /// Short stable label, used when tallying failures.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::Numeric(_) => "numeric",
            Error::Singular { .. } => "singular",
            Error::NotConverged { .. } => "not_converged",
            Error::TailDegenerate => "tail_degenerate",
            Error::NotApplicable(_) => "not_applicable",
            Error::Data(_) => "data",
            Error::Consistency(_) => "consistency",
            Error::Infeasible(_) => "infeasible",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
