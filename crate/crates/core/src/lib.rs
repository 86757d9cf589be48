//! Survey-weighted Lasso GLMs with post-selection inference.

pub mod ame;
pub mod calpha;
pub mod cv;
pub mod debiased;
pub mod error;
pub mod glm;
pub mod lasso;
pub mod linalg;
pub mod param;
pub mod result;
pub mod selective;
pub mod sim;
pub mod stats;
pub mod truncnorm;

#[cfg(test)]
mod testdata;

pub use error::{Error, Result};
pub use result::{InferenceResult, Method};
