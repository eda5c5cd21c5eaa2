//! `fit <family>`: trains on the global `--window` (default: all data) and
//! writes `model.json`, which `predict` reads back.

use std::path::PathBuf;

use clap::Subcommand;
use serde::{Deserialize, Serialize};
use vaxmedia::nowcast::{
    feature_rows, fit_ar_exog, fit_linear_simple, refit_rolling, ExogPanel, ForestModel, ForestParams, GpModel,
    GpOptions, LinearNowcastModel, NoiseSpec, Regularization,
};
use vaxmedia::{Error, MonthlyTimeSeries, SeriesWindow};

use crate::config::{layered, required, ConfigFile};
use crate::error::{CliError, CliResult};
use crate::io::Run;

#[derive(Debug, Subcommand)]
pub enum FitCommand {
    /// y = mu + alpha q (+ beta t) on one query.
    Linear(LinearArgs),
    /// AR(p) with concurrent query regressors, optionally penalised.
    ArExog(ArExogArgs),
    /// Gaussian process with a sum of Matérn-3/2 kernels.
    Gp(GpArgs),
    /// Random forest regression.
    Forest(ForestArgs),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FittedModel {
    Linear(LinearNowcastModel),
    /// The process models `y - offset`.
    Gp { offset: f64, model: GpModel },
    Forest(ForestModel),
}

/// The `result` of `model.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    /// Target months the model was trained on.
    pub training: SeriesWindow,
    /// Lagged targets used as inputs (the AR order for linear models).
    pub lags: usize,
    /// Panel columns, in model order.
    pub queries: Vec<String>,
    pub model: FittedModel,
}

impl FitResult {
    /// Predictions (and GP variances) for every month of `months`.
    pub fn predict(
        &self,
        y: &MonthlyTimeSeries,
        panel: &ExogPanel,
        months: &SeriesWindow,
    ) -> CliResult<(MonthlyTimeSeries, Option<Vec<f64>>)> {
        let panel = panel.select(&self.queries)?;
        match &self.model {
            FittedModel::Linear(m) => Ok((m.predict(y, &panel, months)?, None)),
            FittedModel::Gp { offset, model } => {
                let x = feature_rows(y, &panel, self.lags, months)?;
                let (mean, var) = model.predict(&x)?;
                let mean = mean.into_iter().map(|v| v + offset).collect();
                Ok((MonthlyTimeSeries::new(months.from(), mean)?, Some(var)))
            }
            FittedModel::Forest(f) => {
                let x = feature_rows(y, &panel, self.lags, months)?;
                Ok((MonthlyTimeSeries::new(months.from(), f.predict(&x)?)?, None))
            }
        }
    }
}

#[derive(Debug, Default, Clone, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct LinearArgs {
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Wide query CSV: month,<query>,...
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Panel column to regress on.
    #[arg(long)]
    pub query: Option<String>,
    /// Add a linear time trend.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub trend: Option<bool>,
}

layered!(LinearArgs { y, panel, query, trend });

#[derive(Debug, Default, Clone, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ArExogArgs {
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// AR order.
    #[arg(long)]
    pub p: Option<usize>,
    /// `none`, `lasso` or `elastic-net`.
    #[arg(long)]
    pub reg: Option<String>,
    /// L1 weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// L2 weight (elastic net).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Panel columns to use (default: all).
    #[arg(long, value_delimiter = ',')]
    pub queries: Option<Vec<String>>,
    /// Also refit on each trailing window of this many months.
    #[arg(long)]
    pub rolling_window: Option<usize>,
}

layered!(ArExogArgs { y, panel, p, reg, lambda, eta, queries, rolling_window });

#[derive(Debug, Default, Clone, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GpArgs {
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub queries: Option<Vec<String>>,
    /// Number of Matérn-3/2 components.
    #[arg(long)]
    pub kernels: Option<usize>,
    /// Lagged targets appended to the inputs.
    #[arg(long)]
    pub lags: Option<usize>,
    /// Optimiser starts.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Fix the noise variance instead of estimating it.
    #[arg(long)]
    pub noise_variance: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

layered!(GpArgs { y, panel, queries, kernels, lags, restarts, noise_variance, max_iter });

#[derive(Debug, Default, Clone, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ForestArgs {
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub queries: Option<Vec<String>>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Features tried per split (default: ceil(sqrt(d))).
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bootstrap: Option<bool>,
    #[arg(long)]
    pub lags: Option<usize>,
}

layered!(ForestArgs { y, panel, queries, trees, max_depth, min_leaf, mtry, bootstrap, lags });

pub fn run(run: &mut Run, file: &ConfigFile, cmd: FitCommand) -> CliResult<()> {
    match cmd {
        FitCommand::Linear(a) => linear(run, file.resolve("fit.linear", a)?),
        FitCommand::ArExog(a) => ar_exog(run, file.resolve("fit.ar-exog", a)?),
        FitCommand::Gp(a) => gp(run, file.resolve("fit.gp", a)?),
        FitCommand::Forest(a) => forest(run, file.resolve("fit.forest", a)?),
    }
}

fn load(run: &mut Run, y: &Option<PathBuf>, panel: &Option<PathBuf>) -> CliResult<(MonthlyTimeSeries, ExogPanel)> {
    let y = run.read_series(&required(y.clone(), "y")?)?;
    let panel = run.read_panel(&required(panel.clone(), "panel")?)?;
    Ok((run.windowed(y)?, panel))
}

fn choose(panel: &ExogPanel, queries: &mut Option<Vec<String>>) -> CliResult<ExogPanel> {
    let names = queries.get_or_insert_with(|| panel.names().to_vec());
    Ok(panel.select(names)?)
}

fn finish<C: Serialize>(run: &Run, command: &str, args: &C, result: FitResult, fitted: &MonthlyTimeSeries) -> CliResult<()> {
    let mut written = vec![run.write_series("fitted.csv", fitted)?];
    written.push(run.report("model.json", command, args, &result)?);
    super::print_written(&written);
    Ok(())
}

fn linear(run: &mut Run, mut args: LinearArgs) -> CliResult<()> {
    let (y, panel) = load(run, &args.y, &args.panel)?;
    let query = required(args.query.clone(), "query")?;
    let trend = *args.trend.get_or_insert(false);
    let queries = vec![query];
    let panel = panel.select(&queries)?;
    let q = run.windowed(panel.series()[0].clone())?;
    let model = fit_linear_simple(&y, &q, trend)?;
    let fitted = model.predict(&y, &panel, &model.training)?;
    let result = FitResult { training: model.training, lags: 0, queries, model: FittedModel::Linear(model) };
    finish(run, "fit linear", &args, result, &fitted)
}

fn regularization(args: &mut ArExogArgs) -> CliResult<Regularization> {
    let kind = args.reg.get_or_insert_with(|| "none".into()).clone();
    let lambda = || required(args.lambda, "lambda");
    Ok(match kind.as_str() {
        "none" => Regularization::None,
        "lasso" => Regularization::Lasso { lambda: lambda()? },
        "elastic-net" => Regularization::ElasticNet { lambda: lambda()?, eta: required(args.eta, "eta")? },
        other => return Err(CliError::usage(format!("unknown regularization `{other}`"))),
    })
}

fn ar_exog(run: &mut Run, mut args: ArExogArgs) -> CliResult<()> {
    let (y, panel) = load(run, &args.y, &args.panel)?;
    let panel = choose(&panel, &mut args.queries)?;
    let p = *args.p.get_or_insert(12);
    let reg = regularization(&mut args)?;
    let model = fit_ar_exog(&y, &panel, p, reg)?;
    let fitted = model.predict(&y, &panel, &model.training)?;
    if let Some(window) = args.rolling_window {
        let rolling = refit_rolling(&y, &panel, p, reg, window)?;
        let mut csv = String::from("month,prediction,actual\n");
        for s in &rolling.steps {
            let actual = s.actual.map_or(String::new(), |a| a.to_string());
            csv.push_str(&format!("{},{},{actual}\n", s.month, s.prediction));
        }
        let path = run.write_bytes("rolling.csv", csv.as_bytes())?;
        super::print_written(&[path]);
        if let Some(rmse) = rolling.rmse() {
            println!("rolling rmse {rmse:.6}");
        }
    }
    let result = FitResult {
        training: model.training,
        lags: p,
        queries: panel.names().to_vec(),
        model: FittedModel::Linear(model),
    };
    finish(run, "fit ar-exog", &args, result, &fitted)
}

/// Target months that have a full feature row: inside `y` after its first
/// `lags` months and covered by the panel.
fn feature_months(y: &MonthlyTimeSeries, panel: &ExogPanel, lags: usize) -> CliResult<SeriesWindow> {
    let first = y.start().add_months(lags as i64);
    let usable = if first > y.end() { None } else { Some(SeriesWindow::new(first, y.end())?) };
    let months = match (usable, panel.range()) {
        (Some(a), Some(b)) => a.intersect(&b),
        (Some(a), None) if panel.k() == 0 => Some(a),
        _ => None,
    };
    Ok(months.ok_or(Error::EmptyOverlap)?)
}

fn training_data(
    y: &MonthlyTimeSeries,
    panel: &ExogPanel,
    lags: usize,
) -> CliResult<(SeriesWindow, Vec<Vec<f64>>, Vec<f64>)> {
    let months = feature_months(y, panel, lags)?;
    let x = feature_rows(y, panel, lags, &months)?;
    let target = y.slice(&months)?.into_values();
    Ok((months, x, target))
}

fn gp(run: &mut Run, mut args: GpArgs) -> CliResult<()> {
    let seed = required(run.globals.seed, "seed")?;
    let (y, panel) = load(run, &args.y, &args.panel)?;
    let panel = choose(&panel, &mut args.queries)?;
    let lags = *args.lags.get_or_insert(0);
    let mut opts = GpOptions::new(*args.kernels.get_or_insert(1), seed);
    opts.restarts = *args.restarts.get_or_insert(opts.restarts);
    opts.max_iter = *args.max_iter.get_or_insert(opts.max_iter);
    if let Some(v) = args.noise_variance {
        opts.noise = NoiseSpec::Fixed(v);
    }
    let (months, x, target) = training_data(&y, &panel, lags)?;
    let offset = target.iter().sum::<f64>() / target.len() as f64;
    let centred: Vec<f64> = target.iter().map(|v| v - offset).collect();
    let model = GpModel::fit(&x, &centred, &opts)?;
    let result = FitResult {
        training: months,
        lags,
        queries: panel.names().to_vec(),
        model: FittedModel::Gp { offset, model },
    };
    let (fitted, _) = result.predict(&y, &panel, &months)?;
    finish(run, "fit gp", &args, result, &fitted)
}

fn forest(run: &mut Run, mut args: ForestArgs) -> CliResult<()> {
    let seed = required(run.globals.seed, "seed")?;
    let (y, panel) = load(run, &args.y, &args.panel)?;
    let panel = choose(&panel, &mut args.queries)?;
    let lags = *args.lags.get_or_insert(0);
    let mut params = ForestParams::new(seed);
    params.n_trees = *args.trees.get_or_insert(params.n_trees);
    params.min_leaf = *args.min_leaf.get_or_insert(params.min_leaf);
    params.bootstrap = *args.bootstrap.get_or_insert(params.bootstrap);
    params.max_depth = args.max_depth;
    params.feature_subsample = args.mtry;
    let (months, x, target) = training_data(&y, &panel, lags)?;
    let model = ForestModel::fit(&x, &target, &params)?;
    let result = FitResult {
        training: months,
        lags,
        queries: panel.names().to_vec(),
        model: FittedModel::Forest(model),
    };
    let (fitted, _) = result.predict(&y, &panel, &months)?;
    finish(run, "fit forest", &args, result, &fitted)
}
