mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{ConfigFile, Globals, Layered};
use crate::error::CliResult;
use crate::io::Run;

/// Vaccination-uptake and media-attention analysis.
///
/// Every command reads CSV inputs, writes CSV series and a JSON report to
/// `--out`, and records its resolved settings and input checksums.
#[derive(Debug, Parser)]
#[command(name = "vaxmedia", version)]
struct Cli {
    /// TOML file with settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    globals: Globals,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derive activity, uptake, article-percentage and stance series.
    Derive(commands::derive::Args),
    /// Locate the split with the largest change in correlation.
    Tipping(commands::tipping::Args),
    /// Cross-correlation of two series over a range of lags.
    Ccf(commands::ccf::Args),
    /// Residuals of an AR(p) fit.
    Deseason(commands::deseason::Args),
    /// Fit a nowcasting model.
    #[command(subcommand)]
    Fit(commands::fit::FitCommand),
    /// Predict with a saved model.
    Predict(commands::predict::Args),
    /// Rank queries and choose a subset on a validation window.
    SelectQueries(commands::select::Args),
}

fn run(cli: Cli) -> CliResult<()> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let globals = cli.globals.overlay(file.globals()?);
    let mut run = Run::new(globals);
    match cli.command {
        Command::Derive(a) => commands::derive::run(&mut run, file.resolve("derive", a)?),
        Command::Tipping(a) => commands::tipping::run(&mut run, file.resolve("tipping", a)?),
        Command::Ccf(a) => commands::ccf::run(&mut run, file.resolve("ccf", a)?),
        Command::Deseason(a) => commands::deseason::run(&mut run, file.resolve("deseason", a)?),
        Command::Fit(f) => commands::fit::run(&mut run, &file, f),
        Command::Predict(a) => commands::predict::run(&mut run, file.resolve("predict", a)?),
        Command::SelectQueries(a) => commands::select::run(&mut run, file.resolve("select-queries", a)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
