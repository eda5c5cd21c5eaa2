use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::special::t_sf;
use crate::error::{Error, Result};

/// Least-squares fit with classical (homoskedastic) inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    /// Intercept first when the design has one.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub n: usize,
    /// Residual variance estimate `RSS / (n - k)`.
    pub sigma2: f64,
    pub residuals: Vec<f64>,
}

impl RegressionFit {
    pub fn df_resid(&self) -> usize {
        self.n - self.coefficients.len()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum()
    }
}

/// Ordinary least squares via Householder QR.
///
/// `x` is the full design matrix (include a column of ones for an
/// intercept). R² is computed against the mean of `y` when the design
/// contains a constant column and against zero otherwise.
pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<RegressionFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::LengthMismatch(n, y.len()));
    }
    if n <= k {
        return Err(Error::TooFewRows { rows: n, cols: k });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let col_norm = x.column(j).norm();
        if col_norm == 0.0 || r[(j, j)].abs() <= 1e-10 * col_norm {
            return Err(Error::RankDeficient);
        }
    }
    let mut qty = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, k).into_owned();
    let beta = r.solve_upper_triangular(&rhs).ok_or(Error::RankDeficient)?;

    let fitted = x * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let df = (n - k) as f64;
    let sigma2 = rss / df;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or(Error::RankDeficient)?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let std_errors: Vec<f64> = (0..k).map(|j| (sigma2 * xtx_inv[(j, j)]).sqrt()).collect();
    let t_stats: Vec<f64> = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(&b, &se)| match (b == 0.0, se == 0.0) {
            (true, _) => 0.0,
            (false, true) => b.signum() * f64::INFINITY,
            (false, false) => b / se,
        })
        .collect();
    let p_values = t_stats.iter().map(|&t| t_sf(t, df)).collect();

    let has_intercept = (0..k).any(|j| {
        let c = x.column(j);
        c[0] != 0.0 && c.iter().all(|&v| v == c[0])
    });
    let tss: f64 = if has_intercept {
        let m = super::mean(y);
        y.iter().map(|v| (v - m).powi(2)).sum()
    } else {
        y.iter().map(|v| v * v).sum()
    };
    let r_squared = if tss > 0.0 { (1.0 - rss / tss).max(0.0) } else { 0.0 };

    Ok(RegressionFit {
        coefficients,
        std_errors,
        t_stats,
        p_values,
        r_squared,
        n,
        sigma2,
        residuals,
    })
}

/// Regression of `y` on an intercept and a single regressor `x`.
pub fn ols_simple(x: &[f64], y: &[f64]) -> Result<RegressionFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let design = DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    ols(&design, y)
}
