//! Nowcasting models driven by query or media frequencies: linear
//! autoregressive models with optional LASSO / Elastic Net penalties,
//! Gaussian processes, random forests, and correlation-based query
//! selection.

mod elastic;
mod forest;
mod gp;
mod linear;
mod panel;
mod select;

pub use elastic::{elastic_net, lambda_max, CdOptions, ElasticNetFit};
pub use forest::{ForestModel, ForestParams, Node, Tree};
pub use gp::{matern32, GpModel, GpOptions, MaternComponent, NoiseSpec, StartReport};
pub use linear::{
    ar_exog_lambda_max, fit_ar_exog, fit_ar_exog_with, fit_linear_simple, refit_rolling, FitDiagnostics,
    LinearNowcastModel, Regularization, RollingForecast, RollingStep,
};
pub use panel::ExogPanel;
pub use select::{select_queries, QuerySelection, RankedQuery, SelectOptions, SelectionMode};

use crate::error::{Error, Result};
use crate::timeseries::{MonthlyTimeSeries, SeriesWindow, YearMonth};

/// Feature rows for the non-linear models: the panel's concurrent query
/// values followed by `lags` lagged targets, for each month of `months`.
pub fn feature_rows(
    y: &MonthlyTimeSeries,
    panel: &ExogPanel,
    lags: usize,
    months: &SeriesWindow,
) -> Result<Vec<Vec<f64>>> {
    months
        .months()
        .map(|m| feature_row(y, panel, lags, m))
        .collect()
}

fn feature_row(y: &MonthlyTimeSeries, panel: &ExogPanel, lags: usize, m: YearMonth) -> Result<Vec<f64>> {
    let mut row = panel.row(m).ok_or(Error::MissingMonth(m))?;
    for i in 1..=lags {
        let lag = m.add_months(-(i as i64));
        row.push(y.get(lag).ok_or(Error::MissingMonth(lag))?);
    }
    Ok(row)
}
