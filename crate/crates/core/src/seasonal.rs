//! Autoregressive deseasonalisation, auto/partial autocorrelation and
//! lagged cross-correlation with Student-t significance.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{pearson_r, pearson_r_with, CorrelationTest, DfConvention, Tail};
use crate::timeseries::{align, csv_io, MonthlyTimeSeries};

/// `x_t = intercept + Σ_i coefficients[i-1] · x_{t-i} + ε_t`, fitted by
/// conditional least squares (the first `order` observations are only used
/// as lags).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ARModel {
    pub order: usize,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// One residual per month from `start + order` onwards.
    pub residuals: MonthlyTimeSeries,
}

impl ARModel {
    /// One-step-ahead prediction from the `order` most recent values
    /// (`history` in chronological order).
    pub fn predict_next(&self, history: &[f64]) -> Result<f64> {
        if history.len() < self.order {
            return Err(Error::TooShort { needed: self.order, got: history.len() });
        }
        let n = history.len();
        Ok(self.intercept
            + self
                .coefficients
                .iter()
                .enumerate()
                .map(|(i, a)| a * history[n - 1 - i])
                .sum::<f64>())
    }
}

/// Lag design `[1, x_{t-1}, ..., x_{t-p}]` for `t = p..n`.
pub(crate) fn lag_matrix(values: &[f64], p: usize) -> DMatrix<f64> {
    let rows = values.len() - p;
    DMatrix::from_fn(rows, p + 1, |r, c| if c == 0 { 1.0 } else { values[r + p - c] })
}

/// Minimum-norm least squares; singular directions below a relative
/// tolerance are dropped, so exactly periodic signals still fit.
pub(crate) fn lstsq_min_norm(x: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    svd.solve(&DVector::from_column_slice(y), tol)
        .expect("both singular vector sets were computed")
}

pub fn fit_ar(s: &MonthlyTimeSeries, p: usize) -> Result<ARModel> {
    let values = s.values();
    let needed = p + p.max(10);
    if values.len() < needed {
        return Err(Error::TooShort { needed, got: values.len() });
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Err(Error::RankDeficient);
    }
    let x = lag_matrix(values, p);
    let target = &values[p..];
    let beta = lstsq_min_norm(&x, target);
    let fitted = &x * &beta;
    let residuals = target.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    Ok(ARModel {
        order: p,
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        residuals: MonthlyTimeSeries::new(s.start().add_months(p as i64), residuals)?,
    })
}

/// Residuals of an AR(`p`) fit.
pub fn deseasonalize(s: &MonthlyTimeSeries, p: usize) -> Result<MonthlyTimeSeries> {
    Ok(fit_ar(s, p)?.residuals)
}

/// Autocorrelation at lags `1..=max_lag`, each computed as Pearson's r over
/// the overlapping `n - k` points.
pub fn acf(s: &MonthlyTimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    let v = s.values();
    if max_lag + 2 >= v.len() {
        return Err(Error::TooShort { needed: max_lag + 3, got: v.len() });
    }
    (1..=max_lag)
        .map(|k| Ok(pearson_r(&v[..v.len() - k], &v[k..])?.r))
        .collect()
}

/// Partial autocorrelation at lags `1..=max_lag`: entry `k` is the last
/// coefficient of an AR(`k`) fit.
pub fn pacf(s: &MonthlyTimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    if s.len() < max_lag + 10 {
        return Err(Error::TooShort { needed: max_lag + 10, got: s.len() });
    }
    (1..=max_lag)
        .map(|k| Ok(*fit_ar(s, k)?.coefficients.last().expect("k >= 1")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrelation {
    pub lags: Vec<i64>,
    pub r_at_lag: Vec<f64>,
    pub p_at_lag: Vec<f64>,
    /// Pairs used at each lag.
    pub n_at_lag: Vec<usize>,
    /// `|r|` above which a correlation over the full series length is
    /// significant at the 99% level.
    pub ci99: f64,
}

impl CrossCorrelation {
    pub fn r_at(&self, lag: i64) -> Option<f64> {
        self.lags.iter().position(|&l| l == lag).map(|i| self.r_at_lag[i])
    }

    pub fn significant99(&self, i: usize) -> bool {
        self.p_at_lag[i] < 0.01
    }

    /// Writes `lag,r,p,significant99`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lag", "r", "p", "significant99"]).map_err(csv_io)?;
        for i in 0..self.lags.len() {
            w.write_record([
                self.lags[i].to_string(),
                self.r_at_lag[i].to_string(),
                self.p_at_lag[i].to_string(),
                self.significant99(i).to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The default significance test for cross-correlations: two-sided on
/// `n - 1` degrees of freedom.
pub fn ccf_test() -> CorrelationTest {
    CorrelationTest {
        df: DfConvention::NMinusOne,
        tail: Tail::TwoSided,
    }
}

/// Cross-correlation for lags `-max_lag..=max_lag`; lag `k` pairs `x_t`
/// with `y_{t+k}`, so a positive lag means `x` leads `y`.
pub fn cross_correlation(
    x: &MonthlyTimeSeries,
    y: &MonthlyTimeSeries,
    max_lag: usize,
) -> Result<CrossCorrelation> {
    cross_correlation_with(x, y, max_lag, ccf_test())
}

pub fn cross_correlation_with(
    x: &MonthlyTimeSeries,
    y: &MonthlyTimeSeries,
    max_lag: usize,
    test: CorrelationTest,
) -> Result<CrossCorrelation> {
    let (x, y) = align(x, y)?;
    let (xv, yv) = (x.values(), y.values());
    let n = xv.len();
    if n < max_lag + 10 {
        return Err(Error::TooShort { needed: max_lag + 10, got: n });
    }
    let max_lag = max_lag as i64;
    let mut out = CrossCorrelation {
        lags: Vec::new(),
        r_at_lag: Vec::new(),
        p_at_lag: Vec::new(),
        n_at_lag: Vec::new(),
        ci99: test.critical_r(0.01, n),
    };
    for lag in -max_lag..=max_lag {
        let k = lag.unsigned_abs() as usize;
        let (a, b) = if lag >= 0 {
            (&xv[..n - k], &yv[k..])
        } else {
            (&xv[k..], &yv[..n - k])
        };
        let c = pearson_r_with(a, b, test)?;
        out.lags.push(lag);
        out.r_at_lag.push(c.r);
        out.p_at_lag.push(c.p_value);
        out.n_at_lag.push(c.n);
    }
    Ok(out)
}
