use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vaxmedia::seasonal::{cross_correlation, deseasonalize, CrossCorrelation};

use crate::config::{layered, required};
use crate::error::CliResult;
use crate::io::Run;

#[derive(Debug, Default, Clone, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Args {
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Lags from -MAX to MAX; lag k pairs x_t with y_(t+k).
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Replace both series by their AR(p) residuals first.
    #[arg(long)]
    pub deseason_p: Option<usize>,
}

layered!(Args { x, y, max_lag, deseason_p });

pub fn run(run: &mut Run, mut args: Args) -> CliResult<()> {
    let x_path = required(args.x.clone(), "x")?;
    let y_path = required(args.y.clone(), "y")?;
    let max_lag = *args.max_lag.get_or_insert(12);
    let mut x = run.read_windowed(&x_path)?;
    let mut y = run.read_windowed(&y_path)?;
    if let Some(p) = args.deseason_p {
        x = deseasonalize(&x, p)?;
        y = deseasonalize(&y, p)?;
    }
    let cc: CrossCorrelation = cross_correlation(&x, &y, max_lag)?;
    let written = vec![
        run.write_with("ccf.csv", |w| cc.write_csv(w))?,
        run.report("ccf.json", "ccf", &args, &cc)?,
    ];
    super::print_written(&written);
    Ok(())
}
