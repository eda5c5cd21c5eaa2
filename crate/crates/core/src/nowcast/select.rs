use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::panel::ExogPanel;
use crate::error::{Error, Result};
use crate::stats::{mean, ols, pearson_r, variance};
use crate::timeseries::{MonthlyTimeSeries, SeriesWindow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Chosen queries are standardised on the training window, oriented by
    /// the sign of their correlation and summed into one regressor.
    #[default]
    Aggregate,
    /// Each chosen query is its own regressor.
    Separate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub mode: SelectionMode,
    /// Relative validation-RMSE improvement a query must bring to be kept.
    pub min_improvement: f64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions { mode: SelectionMode::Aggregate, min_improvement: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedQuery {
    pub name: String,
    /// Pearson's r with the target on the training window.
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySelection {
    pub mode: SelectionMode,
    /// All queries by decreasing `|r|`.
    pub ranking: Vec<RankedQuery>,
    pub chosen: Vec<String>,
    /// Validation RMSE with the top `i` queries; entry 0 is the
    /// intercept-only baseline. Stops one past the chosen subset.
    pub validation_rmse: Vec<f64>,
    /// Whether the chosen subset beats the baseline.
    pub improved: bool,
}

fn standardize_on(train: &[f64], all: &[f64]) -> Vec<f64> {
    let m = mean(train);
    let sd = variance(train).sqrt();
    all.iter().map(|v| (v - m) / sd).collect()
}

/// Validation RMSE of a least-squares model on `regressors` (columns
/// covering train then validation rows).
fn validation_rmse(
    regressors: &[Vec<f64>],
    y_train: &[f64],
    y_val: &[f64],
) -> Result<f64> {
    let nt = y_train.len();
    let x = DMatrix::from_fn(nt, regressors.len() + 1, |i, j| if j == 0 { 1.0 } else { regressors[j - 1][i] });
    let fit = ols(&x, y_train)?;
    let sse: f64 = y_val
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut pred = fit.coefficients[0];
            for (j, col) in regressors.iter().enumerate() {
                pred += fit.coefficients[j + 1] * col[nt + i];
            }
            (v - pred).powi(2)
        })
        .sum();
    Ok((sse / y_val.len() as f64).sqrt())
}

/// Ranks queries by training-window correlation with `y`, then adds them
/// from the top of the ranking while validation RMSE keeps improving.
pub fn select_queries(
    y: &MonthlyTimeSeries,
    panel: &ExogPanel,
    train: &SeriesWindow,
    validate: &SeriesWindow,
    opts: &SelectOptions,
) -> Result<QuerySelection> {
    if train.intersect(validate).is_some() {
        return Err(Error::invalid("training and validation windows overlap"));
    }
    for w in [train, validate] {
        if w.len() < 12 {
            return Err(Error::TooShort { needed: 12, got: w.len() });
        }
    }
    let y_train = y.slice(train)?;
    let y_val = y.slice(validate)?;
    if y_train.len() != train.len() || y_val.len() != validate.len() {
        return Err(Error::invalid("target series does not cover both windows"));
    }
    let mut train_cols = Vec::with_capacity(panel.k());
    let mut val_cols = Vec::with_capacity(panel.k());
    for s in panel.series() {
        let t = s.slice(train)?;
        let v = s.slice(validate)?;
        if t.len() != train.len() || v.len() != validate.len() {
            return Err(Error::invalid("panel does not cover both windows"));
        }
        train_cols.push(t.into_values());
        val_cols.push(v.into_values());
    }

    let mut ranking = Vec::with_capacity(panel.k());
    for (j, name) in panel.names().iter().enumerate() {
        let r = pearson_r(&train_cols[j], y_train.values())?.r;
        ranking.push((j, RankedQuery { name: name.clone(), r }));
    }
    ranking.sort_by(|a, b| b.1.r.abs().total_cmp(&a.1.r.abs()));

    // Each query's train+validation column, standardised on train and
    // oriented so that it correlates positively with y.
    let oriented: Vec<Vec<f64>> = ranking
        .iter()
        .map(|(j, q)| {
            let all: Vec<f64> = train_cols[*j].iter().chain(&val_cols[*j]).copied().collect();
            let sign = if q.r < 0.0 { -1.0 } else { 1.0 };
            standardize_on(&train_cols[*j], &all).into_iter().map(|v| sign * v).collect()
        })
        .collect();

    let eps = 1e-9 * variance(y.values()).sqrt();
    let mut trace = vec![validation_rmse(&[], y_train.values(), y_val.values())?];
    let mut chosen = 0;
    let mut aggregate = vec![0.0; train.len() + validate.len()];
    for m in 1..=ranking.len() {
        let regressors: Vec<Vec<f64>> = match opts.mode {
            SelectionMode::Aggregate => {
                for (a, v) in aggregate.iter_mut().zip(&oriented[m - 1]) {
                    *a += v;
                }
                vec![aggregate.clone()]
            }
            SelectionMode::Separate => {
                if m + 2 > train.len() {
                    break;
                }
                oriented[..m].to_vec()
            }
        };
        let rmse = match validation_rmse(&regressors, y_train.values(), y_val.values()) {
            Ok(v) => v,
            Err(Error::RankDeficient) => break,
            Err(e) => return Err(e),
        };
        trace.push(rmse);
        let prev = trace[m - 1];
        if rmse >= prev * (1.0 - opts.min_improvement) - eps {
            break;
        }
        chosen = m;
    }

    Ok(QuerySelection {
        mode: opts.mode,
        chosen: ranking[..chosen].iter().map(|(_, q)| q.name.clone()).collect(),
        ranking: ranking.into_iter().map(|(_, q)| q).collect(),
        validation_rmse: trace,
        improved: chosen > 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::YearMonth;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn ym(s: &str) -> YearMonth {
        s.parse().unwrap()
    }

    fn windows() -> (SeriesWindow, SeriesWindow) {
        (
            SeriesWindow::new(ym("2010-01"), ym("2013-12")).unwrap(),
            SeriesWindow::new(ym("2014-01"), ym("2015-12")).unwrap(),
        )
    }

    fn series(v: Vec<f64>) -> MonthlyTimeSeries {
        MonthlyTimeSeries::new(ym("2010-01"), v).unwrap()
    }

    fn noise(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
        let d = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| d.sample(rng)).collect()
    }

    #[test]
    fn informative_query_is_chosen() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = noise(&mut rng, 72, 1.0);
        let q1: Vec<f64> = y.iter().zip(noise(&mut rng, 72, 0.1)).map(|(a, b)| a + b).collect();
        let q2 = noise(&mut rng, 72, 1.0);
        let panel = ExogPanel::new(vec!["q2".into(), "q1".into()], vec![series(q2), series(q1)]).unwrap();
        let (t, v) = windows();
        let s = select_queries(&series(y.clone()), &panel, &t, &v, &SelectOptions::default()).unwrap();
        assert_eq!(s.ranking[0].name, "q1");
        assert_eq!(s.chosen, vec!["q1".to_string()]);
        assert!(s.improved);
        assert_eq!(s.validation_rmse.len(), 3);

        // A separate regressor can still shave validation error by chance,
        // so only the order of additions is fixed.
        let opts = SelectOptions { mode: SelectionMode::Separate, ..Default::default() };
        let s = select_queries(&series(y), &panel, &t, &v, &opts).unwrap();
        assert_eq!(s.chosen[0], "q1");
        for w in s.validation_rmse.windows(2).take(s.chosen.len()) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn exact_linear_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let qs: Vec<Vec<f64>> = (0..3).map(|_| noise(&mut rng, 72, 1.0)).collect();
        let y: Vec<f64> = (0..72).map(|i| 1.0 + 2.0 * qs[0][i] - qs[1][i] + 0.5 * qs[2][i]).collect();
        let mut names: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let mut cols: Vec<MonthlyTimeSeries> = qs.into_iter().map(series).collect();
        names.push("junk".into());
        cols.push(series(noise(&mut rng, 72, 1.0)));
        let panel = ExogPanel::new(names, cols).unwrap();
        let (t, v) = windows();
        let opts = SelectOptions { mode: SelectionMode::Separate, ..Default::default() };
        let s = select_queries(&series(y), &panel, &t, &v, &opts).unwrap();
        let mut chosen = s.chosen.clone();
        chosen.sort();
        assert_eq!(chosen, vec!["a", "b", "c"]);
        assert!(s.validation_rmse[3] < 1e-10);
    }

    #[test]
    fn ranking_is_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = noise(&mut rng, 72, 1.0);
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|j| y.iter().zip(noise(&mut rng, 72, 0.5 * (j + 1) as f64)).map(|(a, b)| a + b).collect())
            .collect();
        let names: Vec<String> = (0..5).map(|j| format!("q{j}")).collect();
        let panel = ExogPanel::new(names.clone(), cols.iter().cloned().map(series).collect()).unwrap();
        let scaled = ExogPanel::new(
            names,
            cols.iter().enumerate().map(|(j, c)| series(c.iter().map(|v| (j + 2) as f64 * v + 100.0).collect())).collect(),
        )
        .unwrap();
        let (t, v) = windows();
        let a = select_queries(&series(y.clone()), &panel, &t, &v, &SelectOptions::default()).unwrap();
        let b = select_queries(&series(y), &scaled, &t, &v, &SelectOptions::default()).unwrap();
        let names = |s: &QuerySelection| s.ranking.iter().map(|q| q.name.clone()).collect::<Vec<_>>();
        assert_eq!(names(&a), names(&b));
        assert_eq!(a.chosen, b.chosen);
    }

    #[test]
    fn errors() {
        let y = series((0..72).map(|i| i as f64).collect());
        let panel = ExogPanel::new(vec!["c".into()], vec![series(vec![1.0; 72])]).unwrap();
        let (t, v) = windows();
        assert!(matches!(select_queries(&y, &panel, &t, &v, &SelectOptions::default()), Err(Error::ConstantInput)));
        let short = SeriesWindow::new(ym("2014-01"), ym("2014-06")).unwrap();
        assert!(matches!(select_queries(&y, &panel, &t, &short, &SelectOptions::default()), Err(Error::TooShort { .. })));
        assert!(select_queries(&y, &panel, &t, &t, &SelectOptions::default()).is_err());
    }
}
