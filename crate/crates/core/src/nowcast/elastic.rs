//! Coordinate descent for
//! `‖y - μ - Xb‖² + λ‖b̃‖₁ + η‖b̃‖²`, where `b̃` are the coefficients of the
//! standardised regressors. The intercept is never penalised.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::mean;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdOptions {
    pub max_sweeps: usize,
    /// Largest tolerated KKT violation, relative to `2·‖z_j‖·‖y - ȳ‖`.
    pub tol: f64,
}

impl Default for CdOptions {
    fn default() -> Self {
        CdOptions { max_sweeps: 100_000, tol: 1e-11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetFit {
    pub intercept: f64,
    /// Original-scale coefficients.
    pub coefficients: Vec<f64>,
    /// Coefficients of the standardised regressors (the penalised ones).
    pub standardized: Vec<f64>,
    pub sweeps: usize,
    /// Primal minus dual objective over `‖y - ȳ‖²`; `None` when λ = 0.
    pub duality_gap: Option<f64>,
    /// Penalised objective after each sweep, non-increasing.
    pub objective_trace: Vec<f64>,
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smallest λ at which every coefficient is zero:
/// `2·max_j |z_jᵀ(y - ȳ)|`.
pub fn lambda_max(columns: &[Vec<f64>], y: &[f64]) -> f64 {
    let my = mean(y);
    let yc: Vec<f64> = y.iter().map(|v| v - my).collect();
    columns
        .iter()
        .filter_map(|c| standardize(c).map(|(z, _, _)| 2.0 * dot(&z, &yc).abs()))
        .fold(0.0, f64::max)
}

/// `(z, mean, sd)` with population sd; `None` for a constant column.
fn standardize(c: &[f64]) -> Option<(Vec<f64>, f64, f64)> {
    let m = mean(c);
    let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / c.len() as f64).sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return None;
    }
    Some((c.iter().map(|v| (v - m) / sd).collect(), m, sd))
}

pub fn elastic_net(
    columns: &[Vec<f64>],
    y: &[f64],
    lambda: f64,
    eta: f64,
    opts: &CdOptions,
) -> Result<ElasticNetFit> {
    if !(lambda >= 0.0 && eta >= 0.0 && lambda.is_finite() && eta.is_finite()) {
        return Err(Error::invalid("penalties must be finite and non-negative"));
    }
    let n = y.len();
    if n < 2 {
        return Err(Error::TooShort { needed: 2, got: n });
    }
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::LengthMismatch(n, c.len()));
    }
    let k = columns.len();
    let std: Vec<Option<(Vec<f64>, f64, f64)>> = columns.iter().map(|c| standardize(c)).collect();
    let my = mean(y);
    let yc: Vec<f64> = y.iter().map(|v| v - my).collect();
    let y_norm2 = dot(&yc, &yc);

    let mut b = vec![0.0; k];
    let mut r = yc.clone();
    let objective = |r: &[f64], b: &[f64]| {
        dot(r, r) + lambda * b.iter().map(|v| v.abs()).sum::<f64>() + eta * dot(b, b)
    };
    let mut trace: Vec<f64> = Vec::new();
    let mut sweeps = 0;
    let mut converged = y_norm2 == 0.0;

    while !converged && sweeps < opts.max_sweeps {
        sweeps += 1;
        for j in 0..k {
            let Some((z, _, _)) = &std[j] else { continue };
            let nz = n as f64;
            let rho = dot(z, &r) + nz * b[j];
            let new = soft_threshold(rho, 0.5 * lambda) / (nz + eta);
            let delta = new - b[j];
            if delta != 0.0 {
                for (ri, zi) in r.iter_mut().zip(z) {
                    *ri -= delta * zi;
                }
                b[j] = new;
            }
        }
        let obj = objective(&r, &b);
        if let Some(&last) = trace.last() {
            debug_assert!(
                obj <= last + 1e-10 * last.abs().max(y_norm2),
                "objective increased: {last} -> {obj}"
            );
        }
        trace.push(obj);

        let scale = 2.0 * (n as f64).sqrt() * y_norm2.sqrt();
        let mut worst: f64 = 0.0;
        for j in 0..k {
            let Some((z, _, _)) = &std[j] else { continue };
            let g = -2.0 * dot(z, &r) + 2.0 * eta * b[j];
            let v = if b[j] > 0.0 {
                (g + lambda).abs()
            } else if b[j] < 0.0 {
                (g - lambda).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(v / scale);
        }
        converged = worst <= opts.tol;
    }

    let gap = (lambda > 0.0).then(|| {
        if y_norm2 == 0.0 {
            return 0.0;
        }
        let mut dual_norm: f64 = 0.0;
        for j in 0..k {
            if let Some((z, _, _)) = &std[j] {
                dual_norm = dual_norm.max((dot(z, &r) - eta * b[j]).abs());
            }
        }
        let s = if dual_norm > 0.0 { (0.5 * lambda / dual_norm).min(1.0) } else { 1.0 };
        let dual = s * dot(&yc, &r) - 0.5 * s * s * (dot(&r, &r) + eta * dot(&b, &b));
        (objective(&r, &b) - 2.0 * dual) / y_norm2
    });

    if !converged {
        return Err(Error::NotConverged {
            iterations: sweeps,
            gap: gap.unwrap_or(f64::NAN),
        });
    }

    let mut intercept = my;
    let mut coefficients = vec![0.0; k];
    for j in 0..k {
        if let Some((_, m, sd)) = &std[j] {
            coefficients[j] = b[j] / sd;
            intercept -= coefficients[j] * m;
        }
    }
    Ok(ElasticNetFit {
        intercept,
        coefficients,
        standardized: b,
        sweeps,
        duality_gap: gap,
        objective_trace: trace,
    })
}
