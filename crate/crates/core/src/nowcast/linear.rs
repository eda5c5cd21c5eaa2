use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::elastic::{elastic_net, CdOptions};
use super::panel::ExogPanel;
use crate::error::{Error, Result};
use crate::stats::ols;
use crate::timeseries::{MonthlyTimeSeries, SeriesWindow, YearMonth};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regularization {
    #[default]
    None,
    Lasso { lambda: f64 },
    ElasticNet { lambda: f64, eta: f64 },
}

impl Regularization {
    fn penalties(self) -> Option<(f64, f64)> {
        match self {
            Regularization::None => None,
            Regularization::Lasso { lambda } => Some((lambda, 0.0)),
            Regularization::ElasticNet { lambda, eta } => Some((lambda, eta)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_obs: usize,
    /// Coordinate-descent sweeps; 0 for least squares.
    pub iterations: usize,
    pub duality_gap: Option<f64>,
    pub objective_trace: Vec<f64>,
    pub in_sample_rmse: f64,
    /// Least-squares inference in coefficient order
    /// `[mu, theta.., alpha.., trend]`; absent for penalised fits.
    pub std_errors: Option<Vec<f64>>,
    pub p_values: Option<Vec<f64>>,
    pub r_squared: Option<f64>,
}

/// `y_t = mu + Σ theta_i y_{t-i} + Σ alpha_j Q_{j,t} (+ trend_beta · t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearNowcastModel {
    pub mu: f64,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub trend_beta: Option<f64>,
    pub regularization: Regularization,
    pub exog_names: Vec<String>,
    /// Months whose targets entered the fit.
    pub training: SeriesWindow,
    /// Month with trend index `t = 0`.
    pub origin: YearMonth,
    pub diagnostics: FitDiagnostics,
}

impl LinearNowcastModel {
    pub fn p(&self) -> usize {
        self.theta.len()
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    /// Prediction for month `m` from the observed lags in `y` and the
    /// concurrent query values in `exog`.
    pub fn predict_month(&self, y: &MonthlyTimeSeries, exog: &ExogPanel, m: YearMonth) -> Result<f64> {
        if exog.k() != self.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), got: exog.k() });
        }
        let mut v = self.mu;
        for (i, th) in self.theta.iter().enumerate() {
            let lag = m.add_months(-(i as i64) - 1);
            v += th * y.get(lag).ok_or(Error::MissingMonth(lag))?;
        }
        if self.k() > 0 {
            let row = exog.row(m).ok_or(Error::MissingMonth(m))?;
            v += self.alpha.iter().zip(&row).map(|(a, q)| a * q).sum::<f64>();
        }
        if let Some(beta) = self.trend_beta {
            v += beta * self.origin.months_until(m) as f64;
        }
        Ok(v)
    }

    /// One-step-ahead predictions for every month of `months`.
    pub fn predict(
        &self,
        y: &MonthlyTimeSeries,
        exog: &ExogPanel,
        months: &SeriesWindow,
    ) -> Result<MonthlyTimeSeries> {
        let values = months
            .months()
            .map(|m| self.predict_month(y, exog, m))
            .collect::<Result<Vec<_>>>()?;
        MonthlyTimeSeries::new(months.from(), values)
    }
}

fn rmse(residuals: &[f64]) -> f64 {
    (residuals.iter().map(|e| e * e).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// `y_t = μ + α q_t (+ β t)` by least squares over the months both series
/// cover; `t` counts months from the first of them.
pub fn fit_linear_simple(
    y: &MonthlyTimeSeries,
    q: &MonthlyTimeSeries,
    with_trend: bool,
) -> Result<LinearNowcastModel> {
    let (y, q) = crate::timeseries::align(y, q)?;
    let n = y.len();
    let needed = if with_trend { 5 } else { 4 };
    if n < needed {
        return Err(Error::TooShort { needed, got: n });
    }
    let cols = if with_trend { 3 } else { 2 };
    let x = DMatrix::from_fn(n, cols, |i, j| match j {
        0 => 1.0,
        1 => q.values()[i],
        _ => i as f64,
    });
    let fit = ols(&x, y.values())?;
    Ok(LinearNowcastModel {
        mu: fit.coefficients[0],
        theta: Vec::new(),
        alpha: vec![fit.coefficients[1]],
        trend_beta: with_trend.then(|| fit.coefficients[2]),
        regularization: Regularization::None,
        exog_names: vec!["q".into()],
        training: y.range(),
        origin: y.start(),
        diagnostics: FitDiagnostics {
            n_obs: n,
            iterations: 0,
            duality_gap: None,
            objective_trace: Vec::new(),
            in_sample_rmse: rmse(&fit.residuals),
            std_errors: Some(fit.std_errors),
            p_values: Some(fit.p_values),
            r_squared: Some(fit.r_squared),
        },
    })
}

/// Design for `fit_ar_exog`: target months, regressor columns
/// `[y_{t-1}, .., y_{t-p}, Q_{1,t}, .., Q_{k,t}]` and targets.
struct ArDesign {
    months: SeriesWindow,
    columns: Vec<Vec<f64>>,
    target: Vec<f64>,
}

fn ar_design(y: &MonthlyTimeSeries, exog: &ExogPanel, p: usize) -> Result<ArDesign> {
    let (y, exog) = match exog.range() {
        Some(r) => {
            let w = y.range().intersect(&r).ok_or(Error::EmptyOverlap)?;
            (y.slice(&w)?, exog.slice(&w)?)
        }
        None => (y.clone(), exog.clone()),
    };
    let n = y.len();
    if n < p + 10 {
        return Err(Error::TooShort { needed: p + 10, got: n });
    }
    let v = y.values();
    let mut columns: Vec<Vec<f64>> = (1..=p).map(|i| v[p - i..n - i].to_vec()).collect();
    columns.extend(exog.series().iter().map(|s| s.values()[p..].to_vec()));
    Ok(ArDesign {
        months: SeriesWindow::new(y.start().add_months(p as i64), y.end())?,
        columns,
        target: v[p..].to_vec(),
    })
}

pub fn fit_ar_exog(
    y: &MonthlyTimeSeries,
    exog: &ExogPanel,
    p: usize,
    reg: Regularization,
) -> Result<LinearNowcastModel> {
    fit_ar_exog_with(y, exog, p, reg, &CdOptions::default())
}

pub fn fit_ar_exog_with(
    y: &MonthlyTimeSeries,
    exog: &ExogPanel,
    p: usize,
    reg: Regularization,
    cd: &CdOptions,
) -> Result<LinearNowcastModel> {
    let d = ar_design(y, exog, p)?;
    let rows = d.target.len();
    let (coefs, mu, diagnostics) = match reg.penalties() {
        None => {
            let x = DMatrix::from_fn(rows, d.columns.len() + 1, |i, j| {
                if j == 0 { 1.0 } else { d.columns[j - 1][i] }
            });
            let fit = ols(&x, &d.target)?;
            let diag = FitDiagnostics {
                n_obs: rows,
                iterations: 0,
                duality_gap: None,
                objective_trace: Vec::new(),
                in_sample_rmse: rmse(&fit.residuals),
                std_errors: Some(fit.std_errors),
                p_values: Some(fit.p_values),
                r_squared: Some(fit.r_squared),
            };
            (fit.coefficients[1..].to_vec(), fit.coefficients[0], diag)
        }
        Some((lambda, eta)) => {
            let fit = elastic_net(&d.columns, &d.target, lambda, eta, cd)?;
            let residuals: Vec<f64> = (0..rows)
                .map(|i| {
                    d.target[i]
                        - fit.intercept
                        - fit.coefficients.iter().zip(&d.columns).map(|(c, col)| c * col[i]).sum::<f64>()
                })
                .collect();
            let diag = FitDiagnostics {
                n_obs: rows,
                iterations: fit.sweeps,
                duality_gap: fit.duality_gap,
                objective_trace: fit.objective_trace,
                in_sample_rmse: rmse(&residuals),
                std_errors: None,
                p_values: None,
                r_squared: None,
            };
            (fit.coefficients, fit.intercept, diag)
        }
    };
    Ok(LinearNowcastModel {
        mu,
        theta: coefs[..p].to_vec(),
        alpha: coefs[p..].to_vec(),
        trend_beta: None,
        regularization: reg,
        exog_names: exog.names().to_vec(),
        training: d.months,
        origin: d.months.from(),
        diagnostics,
    })
}

/// `λ` above which a LASSO/Elastic Net `fit_ar_exog` keeps every
/// coefficient at zero.
pub fn ar_exog_lambda_max(y: &MonthlyTimeSeries, exog: &ExogPanel, p: usize) -> Result<f64> {
    let d = ar_design(y, exog, p)?;
    Ok(super::elastic::lambda_max(&d.columns, &d.target))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingStep {
    pub month: YearMonth,
    pub prediction: f64,
    /// Observed value, if `y` covers the month.
    pub actual: Option<f64>,
    pub model: LinearNowcastModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingForecast {
    pub window: usize,
    pub steps: Vec<RollingStep>,
}

impl RollingForecast {
    pub fn predictions(&self) -> Result<MonthlyTimeSeries> {
        MonthlyTimeSeries::from_pairs(self.steps.iter().map(|s| (s.month, s.prediction)))
    }

    /// Root mean squared error over steps with an observed value.
    pub fn rmse(&self) -> Option<f64> {
        let errs: Vec<f64> = self
            .steps
            .iter()
            .filter_map(|s| s.actual.map(|a| a - s.prediction))
            .collect();
        (!errs.is_empty()).then(|| rmse(&errs))
    }
}

/// Refits on the `window` months preceding each target month and predicts
/// that month one step ahead. Target months run from `y.start + window`
/// through one month past the end of `y` when the panel reaches it.
pub fn refit_rolling(
    y: &MonthlyTimeSeries,
    exog: &ExogPanel,
    p: usize,
    reg: Regularization,
    window: usize,
) -> Result<RollingForecast> {
    if window < p + 10 {
        return Err(Error::TooShort { needed: p + 10, got: window });
    }
    if y.len() < window {
        return Err(Error::TooShort { needed: window, got: y.len() });
    }
    let last = y.end().succ();
    let targets: Vec<YearMonth> = (window..=y.len())
        .map(|i| y.start().add_months(i as i64))
        .filter(|&m| m != last || exog.k() == 0 || exog.row(m).is_some())
        .collect();
    let steps = targets
        .par_iter()
        .map(|&m| {
            let w = SeriesWindow::new(m.add_months(-(window as i64)), m.pred())?;
            let model = fit_ar_exog(&y.slice(&w)?, exog, p, reg)?;
            Ok(RollingStep {
                month: m,
                prediction: model.predict_month(y, exog, m)?,
                actual: y.get(m),
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RollingForecast { window, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seasonal::fit_ar;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ym(s: &str) -> YearMonth {
        s.parse().unwrap()
    }

    fn series(values: Vec<f64>) -> MonthlyTimeSeries {
        MonthlyTimeSeries::new(ym("2010-01"), values).unwrap()
    }

    fn panel(cols: Vec<Vec<f64>>) -> ExogPanel {
        let names = (0..cols.len()).map(|j| format!("q{j}")).collect();
        ExogPanel::new(names, cols.into_iter().map(series).collect()).unwrap()
    }

    /// AR(1) plus two queries with known coefficients.
    fn synthetic(seed: u64, n: usize, noise: f64) -> (MonthlyTimeSeries, ExogPanel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = Normal::new(0.0, noise).unwrap();
        let q: Vec<Vec<f64>> = (0..2).map(|_| (0..n).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let mut y = vec![5.0];
        for t in 1..n {
            y.push(2.0 + 0.4 * y[t - 1] + 1.5 * q[0][t] - 0.5 * q[1][t] + e.sample(&mut rng));
        }
        (series(y), panel(q))
    }

    #[test]
    fn simple_examples() {
        let q = series(vec![1.0, 3.0, 2.0, 5.0, 4.0]);
        let m = fit_linear_simple(&q.map(|v| 2.0 * v).unwrap(), &q, false).unwrap();
        assert!(m.mu.abs() < 1e-12 && (m.alpha[0] - 2.0).abs() < 1e-12);

        let t = series((0..8).map(|i| i as f64).collect());
        let noise = series(vec![0.3, -1.0, 0.7, 0.2, -0.4, 1.1, -0.6, 0.5]);
        let m = fit_linear_simple(&t, &noise, true).unwrap();
        assert!(m.alpha[0].abs() < 1e-10);
        assert!((m.trend_beta.unwrap() - 1.0).abs() < 1e-10);
        let pred = m.predict_month(&t, &panel(vec![vec![0.0; 9]]), ym("2010-09")).unwrap();
        assert!((pred - 8.0).abs() < 1e-9);

        assert!(matches!(
            fit_linear_simple(&t, &series(vec![1.0; 8]), false),
            Err(Error::RankDeficient)
        ));
        assert!(matches!(
            fit_linear_simple(&series(vec![1.0, 2.0, 3.0, 4.0]), &series(vec![1.0, 0.0, 2.0, 5.0]), true),
            Err(Error::TooShort { needed: 5, got: 4 })
        ));
    }

    #[test]
    fn degenerate_panel_is_pure_ar() {
        let (y, _) = synthetic(1, 120, 1.0);
        let m = fit_ar_exog(&y, &ExogPanel::empty(), 3, Regularization::None).unwrap();
        let ar = fit_ar(&y, 3).unwrap();
        assert!((m.mu - ar.intercept).abs() < 1e-8);
        for i in 0..3 {
            assert!((m.theta[i] - ar.coefficients[i]).abs() < 1e-8);
        }
        assert_eq!(m.training.from(), ym("2010-04"));
    }

    #[test]
    fn recovers_planted_coefficients() {
        let (y, q) = synthetic(2, 300, 0.5);
        let m = fit_ar_exog(&y, &q, 1, Regularization::None).unwrap();
        assert!((m.theta[0] - 0.4).abs() < 0.05);
        assert!((m.alpha[0] - 1.5).abs() < 0.05);
        assert!((m.alpha[1] + 0.5).abs() < 0.05);
        assert!(m.diagnostics.in_sample_rmse < 0.6);
    }

    #[test]
    fn total_shrinkage() {
        let (y, q) = synthetic(3, 80, 1.0);
        let lmax = ar_exog_lambda_max(&y, &q, 2).unwrap();
        let m = fit_ar_exog(&y, &q, 2, Regularization::Lasso { lambda: lmax * 1.01 }).unwrap();
        assert!(m.theta.iter().chain(&m.alpha).all(|&c| c == 0.0));
        let target_mean = crate::stats::mean(&y.values()[2..]);
        assert!((m.mu - target_mean).abs() < 1e-12);
    }

    #[test]
    fn supports_more_coefficients_than_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 30;
        let cols: Vec<Vec<f64>> = (0..40).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let y = series((0..n).map(|t| 3.0 * cols[0][t] + rng.random_range(0.0..0.1)).collect());
        let m = fit_ar_exog(&y, &panel(cols), 4, Regularization::ElasticNet { lambda: 0.5, eta: 0.1 }).unwrap();
        assert_eq!(m.alpha.len(), 40);
        assert!(m.alpha[0] > 1.0);
        assert!(m.diagnostics.duality_gap.unwrap() < 1e-8);
    }

    #[test]
    fn rolling_full_window_equals_single_fit() {
        let (y, q) = synthetic(5, 60, 1.0);
        let r = refit_rolling(&y, &q, 2, Regularization::None, 59).unwrap();
        // The panel does not reach past `y`, so 2015-01 is not a target.
        assert_eq!(r.steps.len(), 1);
        let fit = fit_ar_exog(&y.slice(&SeriesWindow::new(y.start(), ym("2014-11")).unwrap()).unwrap(), &q, 2, Regularization::None).unwrap();
        assert_eq!(r.steps[0].model, fit);

        let (y, q) = synthetic(5, 61, 1.0);
        let short = y.slice(&SeriesWindow::new(y.start(), ym("2014-12")).unwrap()).unwrap();
        let r = refit_rolling(&short, &q, 2, Regularization::None, 60).unwrap();
        assert_eq!(r.steps.len(), 1);
        assert_eq!(r.steps[0].month, ym("2015-01"));
        assert_eq!(r.steps[0].actual, None);
        assert_eq!(r.steps[0].model, fit_ar_exog(&short, &q, 2, Regularization::None).unwrap());
    }

    #[test]
    fn rolling_errors() {
        let (y, q) = synthetic(6, 40, 1.0);
        assert!(matches!(refit_rolling(&y, &q, 3, Regularization::None, 12), Err(Error::TooShort { needed: 13, .. })));
        assert!(matches!(refit_rolling(&y, &q, 1, Regularization::None, 41), Err(Error::TooShort { .. })));
    }

    #[test]
    fn predict_needs_lags_and_matching_panel() {
        let (y, q) = synthetic(7, 50, 1.0);
        let m = fit_ar_exog(&y, &q, 2, Regularization::None).unwrap();
        assert!(matches!(m.predict_month(&y, &q, y.start()), Err(Error::MissingMonth(_))));
        assert!(matches!(
            m.predict_month(&y, &ExogPanel::empty(), ym("2012-01")),
            Err(Error::DimensionMismatch { expected: 2, got: 0 })
        ));
        let w = SeriesWindow::new(ym("2012-01"), ym("2012-06")).unwrap();
        assert_eq!(m.predict(&y, &q, &w).unwrap().len(), 6);
    }

    #[test]
    fn model_json_round_trip() {
        let (y, q) = synthetic(8, 50, 1.0);
        let m = fit_ar_exog(&y, &q, 1, Regularization::ElasticNet { lambda: 1.0, eta: 0.5 }).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"kind\":\"elastic-net\""));
        let back: LinearNowcastModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
