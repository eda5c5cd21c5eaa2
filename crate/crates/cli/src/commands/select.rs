use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use vaxmedia::nowcast::{select_queries, SelectOptions, SelectionMode};
use vaxmedia::SeriesWindow;

use super::kebab;
use crate::config::{layered, required};
use crate::error::CliResult;
use crate::io::Run;

/// The global `--window` is the training window.
#[derive(Debug, Default, Clone, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Args {
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Wide query CSV: month,<query>,...
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long)]
    pub validate: Option<SeriesWindow>,
    /// `aggregate` or `separate`.
    #[arg(long, value_parser = kebab::<SelectionMode>)]
    pub mode: Option<SelectionMode>,
    #[arg(long)]
    pub min_improvement: Option<f64>,
}

layered!(Args { y, panel, validate, mode, min_improvement });

pub fn run(run: &mut Run, mut args: Args) -> CliResult<()> {
    let train = required(run.window(), "window")?;
    let validate = required(args.validate, "validate")?;
    let y_path = required(args.y.clone(), "y")?;
    let panel_path = required(args.panel.clone(), "panel")?;
    let defaults = SelectOptions::default();
    let opts = SelectOptions {
        mode: *args.mode.get_or_insert(defaults.mode),
        min_improvement: *args.min_improvement.get_or_insert(defaults.min_improvement),
    };
    let y = run.read_series(&y_path)?;
    let panel = run.read_panel(&panel_path)?;
    let sel = select_queries(&y, &panel, &train, &validate, &opts)?;
    println!("chosen: {}", sel.chosen.join(","));
    let written = vec![run.report("selection.json", "select-queries", &args, &sel)?];
    super::print_written(&written);
    Ok(())
}
