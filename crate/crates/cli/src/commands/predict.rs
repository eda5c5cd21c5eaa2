use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::fit::FitResult;
use crate::config::{layered, required};
use crate::error::{CliError, CliResult};
use crate::io::Run;

/// The global `--window` gives the months to predict.
#[derive(Debug, Default, Clone, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Args {
    /// `model.json` written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Target history, for lagged inputs and scoring.
    #[arg(long)]
    pub y: Option<PathBuf>,
    #[arg(long)]
    pub panel: Option<PathBuf>,
}

layered!(Args { model, y, panel });

#[derive(Serialize)]
struct Report {
    months: usize,
    /// Over months where `y` is observed.
    rmse: Option<f64>,
    scored: usize,
}

pub fn run(run: &mut Run, args: Args) -> CliResult<()> {
    let months = required(run.window(), "window")?;
    let model_path = required(args.model.clone(), "model")?;
    let bytes = run.read(&model_path)?;
    let bad = |e: serde_json::Error| CliError::Core(vaxmedia::Error::Parse {
        source_name: model_path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    });
    let mut doc: serde_json::Value = serde_json::from_slice(&bytes).map_err(bad)?;
    let fit: FitResult = serde_json::from_value(doc["result"].take()).map_err(bad)?;
    let y = run.read_series(&required(args.y.clone(), "y")?)?;
    let panel = run.read_panel(&required(args.panel.clone(), "panel")?)?;

    let (pred, var) = fit.predict(&y, &panel, &months)?;
    let mut csv = String::from(if var.is_some() { "month,prediction,variance\n" } else { "month,prediction\n" });
    let mut errors = Vec::new();
    for (i, (m, p)) in pred.iter().enumerate() {
        match &var {
            Some(v) => csv.push_str(&format!("{m},{p},{}\n", v[i])),
            None => csv.push_str(&format!("{m},{p}\n")),
        }
        if let Some(a) = y.get(m) {
            errors.push(a - p);
        }
    }
    let rmse = (!errors.is_empty()).then(|| (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt());
    let report = Report { months: pred.len(), rmse, scored: errors.len() };
    let written = vec![
        run.write_bytes("predictions.csv", csv.as_bytes())?,
        run.report("predict.json", "predict", &args, report)?,
    ];
    super::print_written(&written);
    Ok(())
}
