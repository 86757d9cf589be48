use serde::{Deserialize, Serialize};
use std::fmt;

/// Inference procedure that produced a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String")]
pub enum Method {
    /// Debiased (one-step) Lasso Wald test.
    DB,
    /// Orthogonalized score test at a restricted auxiliary estimate.
    CAlpha,
    /// Selective inference; for nonlinear targets, also conditions on the
    /// sign of the estimate.
    SI,
    /// Selective inference for nonlinear targets without sign conditioning.
    SI2,
    /// Unpenalized survey-weighted GLM with sandwich variance.
    TSvy,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::DB, Method::CAlpha, Method::SI, Method::SI2, Method::TSvy];

    pub fn label(self) -> &'static str {
        match self {
            Method::DB => "DB",
            Method::CAlpha => "Calpha",
            Method::SI => "SI",
            Method::SI2 => "SI2",
            Method::TSvy => "t_svy",
        }
    }

    /// Parse the short names accepted on the command line.
    pub fn parse(s: &str) -> Option<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "db" => Some(Method::DB),
            "ca" | "calpha" | "c_alpha" => Some(Method::CAlpha),
            "si" => Some(Method::SI),
            "si2" => Some(Method::SI2),
            "tsvy" | "t_svy" | "t" => Some(Method::TSvy),
            _ => None,
        }
    }
}

impl TryFrom<String> for Method {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        Method::parse(&s).ok_or_else(|| format!("unknown method `{s}` (expected db, ca, si, si2 or tsvy)"))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Point estimate, test and confidence interval for one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub method: Method,
    /// Human-readable target, e.g. `theta[2]` or `AME[2] | selected model`.
    pub target: String,
    pub estimate: f64,
    pub std_error: f64,
    /// z, t or chi-square statistic depending on the method.
    pub statistic: f64,
    /// Degrees of freedom for chi-square or t statistics.
    pub df: Option<f64>,
    pub null_value: f64,
    pub p_value: f64,
    /// Interval at level `1 - zeta`; endpoints may be infinite for SI.
    pub ci: (f64, f64),
    pub zeta: f64,
    /// Truncation interval of the selective pivot on the `n^{1/2}` scale.
    pub truncation: Option<(f64, f64)>,
    pub pseudo_inverse_used: bool,
}

impl InferenceResult {
    pub fn rejects(&self) -> bool {
        self.p_value < self.zeta
    }
}
