use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vaxmedia::changepoint::{
    find_tipping_point, split_regression, ImpliedChange, SplitBoundary, SplitRegressionReport, TippingOptions,
};
use vaxmedia::stats::{CorrelationResult, CorrelationTest, DfConvention, Tail};
use vaxmedia::{align, SeriesWindow, YearMonth};

use super::kebab;
use crate::config::{layered, required};
use crate::error::CliResult;
use crate::io::Run;

#[derive(Debug, Default, Clone, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Args {
    /// Regressor series CSV (month,value), e.g. article percentage.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Response series CSV (month,value), e.g. vaccination activity.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Months eligible as the split, `FROM..TO` (default: all).
    #[arg(long)]
    pub candidates: Option<SeriesWindow>,
    /// Minimum months on each side of the split.
    #[arg(long)]
    pub min_segment: Option<usize>,
    /// `starts-after` or `ends-before`.
    #[arg(long, value_parser = kebab::<SplitBoundary>)]
    pub boundary: Option<SplitBoundary>,
    /// Degrees of freedom for the correlation test: `standard` or `n-minus-one`.
    #[arg(long, value_parser = kebab::<DfConvention>)]
    pub df: Option<DfConvention>,
    /// `two-sided` or `one-sided`.
    #[arg(long, value_parser = kebab::<Tail>)]
    pub tail: Option<Tail>,
    /// Change in x used to report the implied change in y.
    #[arg(long, allow_negative_numbers = true)]
    pub delta_x: Option<f64>,
}

layered!(Args { x, y, candidates, min_segment, boundary, df, tail, delta_x });

#[derive(Serialize)]
struct Report {
    split: YearMonth,
    before: CorrelationResult,
    after: CorrelationResult,
    delta: f64,
    regression: SplitRegressionReport,
    implied_change: ImpliedChange,
    summary: String,
}

pub fn run(run: &mut Run, mut args: Args) -> CliResult<()> {
    let x_path = required(args.x.clone(), "x")?;
    let y_path = required(args.y.clone(), "y")?;
    let defaults = TippingOptions::default();
    let opts = TippingOptions {
        min_segment: *args.min_segment.get_or_insert(defaults.min_segment),
        boundary: *args.boundary.get_or_insert(defaults.boundary),
        test: CorrelationTest {
            df: *args.df.get_or_insert(defaults.test.df),
            tail: *args.tail.get_or_insert(defaults.test.tail),
        },
    };
    let delta_x = *args.delta_x.get_or_insert(5e-4);

    let x = run.read_series(&x_path)?;
    let y = run.read_series(&y_path)?;
    let (x, y) = align(&run.windowed(x)?, &run.windowed(y)?)?;
    let analysis = x.range();
    let candidates = *args.candidates.get_or_insert(analysis);

    let tp = find_tipping_point(&x, &y, &candidates, &opts)?;
    let regression = split_regression(&x, &y, tp.split, &analysis, opts.boundary)?;
    let report = Report {
        split: tp.split,
        before: tp.before,
        after: tp.after,
        delta: tp.delta,
        implied_change: regression.implied_change(delta_x),
        summary: regression.summary(delta_x),
        regression,
    };
    let written = vec![
        run.write_with("tipping_scan.csv", |w| tp.write_scan_csv(w))?,
        run.report("tipping.json", "tipping", &args, report)?,
    ];
    println!("split {} (delta r = {:.4})", tp.split, tp.delta);
    super::print_written(&written);
    Ok(())
}
