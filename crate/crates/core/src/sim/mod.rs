//! Finite-population Monte Carlo for the rejection-frequency study.

mod population;
mod study;

pub use population::{
    default_theta0, draw_sample, generate_population, true_ame_exact, true_ame_oracle, Population, SchemeKind,
    StratificationScheme,
};
pub use study::{
    derive_seed, run_rejection_study, run_rejection_study_with, DimensionDiagnostics, Hypothesis, LambdaPolicy,
    Progress, RejectionCell, RejectionTable, SimulationConfig, SimulationConfigEcho,
};
