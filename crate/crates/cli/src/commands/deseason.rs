use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vaxmedia::seasonal::fit_ar;

use crate::config::{layered, required};
use crate::error::CliResult;
use crate::io::Run;

#[derive(Debug, Default, Clone, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Args {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// AR order.
    #[arg(long)]
    pub p: Option<usize>,
}

layered!(Args { input, p });

#[derive(Serialize)]
struct Report {
    order: usize,
    intercept: f64,
    coefficients: Vec<f64>,
    residual_rms: f64,
}

pub fn run(run: &mut Run, mut args: Args) -> CliResult<()> {
    let path = required(args.input.clone(), "input")?;
    let p = *args.p.get_or_insert(12);
    let s = run.read_windowed(&path)?;
    let model = fit_ar(&s, p)?;
    let r = model.residuals.values();
    let report = Report {
        order: model.order,
        intercept: model.intercept,
        coefficients: model.coefficients.clone(),
        residual_rms: (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt(),
    };
    let written = vec![
        run.write_series("residuals.csv", &model.residuals)?,
        run.report("deseason.json", "deseason", &args, report)?,
    ];
    super::print_written(&written);
    Ok(())
}
