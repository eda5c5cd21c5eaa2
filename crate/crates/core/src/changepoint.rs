//! Tipping-point detection between two monthly signals and the
//! before/after regression that characterises each side.

use std::fmt::{self, Write as _};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{ols_simple, pearson_r_with, CorrelationResult, CorrelationTest, RegressionFit};
use crate::timeseries::{align, csv_io, MonthlyTimeSeries, SeriesWindow, YearMonth};

/// Which side of the cut the split month itself belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitBoundary {
    /// The split month is the first month of the "after" segment.
    #[default]
    StartsAfter,
    /// The split month is the last month of the "before" segment.
    EndsBefore,
}

impl SplitBoundary {
    /// Number of months in the "before" segment when the series starts at
    /// index 0 and the split month sits at `index`.
    fn cut(self, index: usize) -> usize {
        match self {
            SplitBoundary::StartsAfter => index,
            SplitBoundary::EndsBefore => index + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TippingOptions {
    pub min_segment: usize,
    pub boundary: SplitBoundary,
    pub test: CorrelationTest,
}

impl Default for TippingOptions {
    fn default() -> Self {
        TippingOptions {
            min_segment: 12,
            boundary: SplitBoundary::default(),
            test: CorrelationTest::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub split: YearMonth,
    pub before: CorrelationResult,
    pub after: CorrelationResult,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TippingPointResult {
    pub split: YearMonth,
    pub boundary: SplitBoundary,
    pub before: CorrelationResult,
    pub after: CorrelationResult,
    /// `|after.r - before.r|`, the maximum over `scan`.
    pub delta: f64,
    pub scan: Vec<ScanEntry>,
}

impl TippingPointResult {
    /// Writes `split_month,r_before,p_before,r_after,p_after,delta`.
    pub fn write_scan_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["split_month", "r_before", "p_before", "r_after", "p_after", "delta"])
            .map_err(csv_io)?;
        for e in &self.scan {
            w.write_record([
                e.split.to_string(),
                e.before.r.to_string(),
                e.before.p_value.to_string(),
                e.after.r.to_string(),
                e.after.p_value.to_string(),
                e.delta.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scans every candidate split month, correlating `x` and `y` separately on
/// each side, and returns the split with the largest change in Pearson's r.
/// Ties go to the earliest candidate.
///
/// Candidates are restricted to splits that leave at least
/// `opts.min_segment` months on both sides.
pub fn find_tipping_point(
    x: &MonthlyTimeSeries,
    y: &MonthlyTimeSeries,
    candidates: &SeriesWindow,
    opts: &TippingOptions,
) -> Result<TippingPointResult> {
    if opts.min_segment < 3 {
        return Err(Error::invalid("min_segment must be at least 3 months"));
    }
    let (x, y) = align(x, y)?;
    let n = x.len();
    let start = x.start();
    let feasible: Vec<(YearMonth, usize)> = candidates
        .months()
        .filter_map(|c| {
            let idx = start.months_until(c);
            if idx < 0 || idx as usize >= n {
                return None;
            }
            let cut = opts.boundary.cut(idx as usize);
            (cut >= opts.min_segment && n - cut >= opts.min_segment).then_some((c, cut))
        })
        .collect();
    if feasible.is_empty() {
        return Err(Error::SegmentTooShort {
            needed: 2 * opts.min_segment,
            got: n,
        });
    }

    let (xv, yv) = (x.values(), y.values());
    let scan = feasible
        .par_iter()
        .map(|&(c, cut)| {
            let constant = |e: Error| match e {
                Error::ConstantInput => Error::ConstantSegment(c),
                other => other,
            };
            let before = pearson_r_with(&xv[..cut], &yv[..cut], opts.test).map_err(constant)?;
            let after = pearson_r_with(&xv[cut..], &yv[cut..], opts.test).map_err(constant)?;
            Ok(ScanEntry {
                split: c,
                before,
                after,
                delta: (after.r - before.r).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = scan
        .iter()
        .fold(None::<&ScanEntry>, |best, e| match best {
            Some(b) if b.delta >= e.delta => Some(b),
            _ => Some(e),
        })
        .expect("scan is non-empty");

    Ok(TippingPointResult {
        split: best.split,
        boundary: opts.boundary,
        before: best.before,
        after: best.after,
        delta: best.delta,
        scan,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRegressionReport {
    pub before: RegressionFit,
    pub after: RegressionFit,
    pub before_window: SeriesWindow,
    pub after_window: SeriesWindow,
}

/// Effect of a change `delta_x` in the regressor on each side of a split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedChange {
    pub delta_x: f64,
    pub before: f64,
    pub after: f64,
}

impl SplitRegressionReport {
    pub fn implied_change(&self, delta_x: f64) -> ImpliedChange {
        ImpliedChange {
            delta_x,
            before: self.before.coefficients[1] * delta_x,
            after: self.after.coefficients[1] * delta_x,
        }
    }

    /// Human-readable summary of both fits and the response to `delta_x`.
    pub fn summary(&self, delta_x: f64) -> String {
        let change = self.implied_change(delta_x);
        let mut out = String::new();
        for (label, window, fit, dy) in [
            ("before", &self.before_window, &self.before, change.before),
            ("after", &self.after_window, &self.after, change.after),
        ] {
            let _ = writeln!(
                out,
                "{label:<6} {window}: n={} slope={:.0} (se {:.0}, p={:.3}) R²={:.3}; Δx={delta_x} → Δy={dy:+.2}",
                fit.n, fit.coefficients[1], fit.std_errors[1], fit.p_values[1], fit.r_squared,
            );
        }
        out
    }
}

impl fmt::Display for SplitRegressionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, window, fit) in [
            ("before", &self.before_window, &self.before),
            ("after", &self.after_window, &self.after),
        ] {
            writeln!(
                f,
                "{label:<6} {window}: n={} intercept={:.4} slope={:.4} (p={:.4}) R²={:.4}",
                fit.n, fit.coefficients[0], fit.coefficients[1], fit.p_values[1], fit.r_squared
            )?;
        }
        Ok(())
    }
}

/// Regresses `y` on an intercept and `x` separately before and after
/// `split`, using only months inside `analysis`.
pub fn split_regression(
    x: &MonthlyTimeSeries,
    y: &MonthlyTimeSeries,
    split: YearMonth,
    analysis: &SeriesWindow,
    boundary: SplitBoundary,
) -> Result<SplitRegressionReport> {
    const MIN_POINTS: usize = 4;
    let (x, y) = align(x, y)?;
    let (x, y) = (x.slice(analysis)?, y.slice(analysis)?);
    let last_before = match boundary {
        SplitBoundary::StartsAfter => split.pred(),
        SplitBoundary::EndsBefore => split,
    };
    let too_short = |got: usize| Error::SegmentTooShort { needed: MIN_POINTS, got };
    if last_before < x.start() || last_before >= x.end() {
        return Err(too_short(0));
    }
    let before_window = SeriesWindow::new(x.start(), last_before)?;
    let after_window = SeriesWindow::new(last_before.succ(), x.end())?;
    let fit = |w: &SeriesWindow| -> Result<RegressionFit> {
        let (xs, ys) = (x.slice(w)?, y.slice(w)?);
        if xs.len() < MIN_POINTS {
            return Err(too_short(xs.len()));
        }
        ols_simple(xs.values(), ys.values())
    };
    Ok(SplitRegressionReport {
        before: fit(&before_window)?,
        after: fit(&after_window)?,
        before_window,
        after_window,
    })
}
