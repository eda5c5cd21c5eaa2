//! Correlation, Student-t significance and least-squares inference.

mod correlation;
mod ols;
mod special;

pub use correlation::{pearson_r, pearson_r_with, CorrelationResult, CorrelationTest, DfConvention, Tail};
pub use ols::{ols, ols_simple, RegressionFit};
pub use special::{beta_inc, ln_beta, ln_gamma, t_critical, t_sf};

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance (divides by `n`).
pub(crate) fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}
