//! TOML run configuration layered under command-line flags.
//!
//! Top-level keys `seed`, `window` and `out` mirror the global flags; each
//! command reads its own table (`[tipping]`, `[fit.gp]`, ...).

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vaxmedia::SeriesWindow;

use crate::error::{CliError, CliResult};

/// Settings that can come from both a flag and the config file; flags win.
pub trait Layered: Sized + Default + DeserializeOwned {
    fn overlay(self, file: Self) -> Self;
}

macro_rules! layered {
    ($t:ty { $($field:ident),* $(,)? }) => {
        impl $crate::config::Layered for $t {
            fn overlay(self, file: Self) -> Self {
                Self { $($field: self.$field.or(file.$field)),* }
            }
        }
    };
}
pub(crate) use layered;

#[derive(Debug, Default, Clone, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields)]
pub struct Globals {
    /// Seed for stochastic model fitting (required by `fit gp` and `fit forest`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Analysis window, `FROM..TO` (e.g. 2010-01..2016-12).
    #[arg(long, global = true)]
    pub window: Option<SeriesWindow>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

layered!(Globals { seed, window, out });

pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile { table: toml::Table::new() });
        };
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Ok(ConfigFile { table })
    }

    /// The table at a dotted path such as `fit.gp`; empty if absent.
    fn section(&self, path: &str) -> CliResult<toml::Table> {
        let mut table = &self.table;
        for key in path.split('.') {
            match table.get(key) {
                None => return Ok(toml::Table::new()),
                Some(toml::Value::Table(t)) => table = t,
                Some(_) => return Err(CliError::usage(format!("config key `{path}` must be a table"))),
            }
        }
        Ok(table.clone())
    }

    pub fn globals(&self) -> CliResult<Globals> {
        let mut top = self.table.clone();
        top.retain(|_, v| !v.is_table());
        parse(top, "top level")
    }

    pub fn resolve<T: Layered>(&self, section: &str, flags: T) -> CliResult<T> {
        let file: T = parse(self.section(section)?, section)?;
        Ok(flags.overlay(file))
    }
}

fn parse<T: DeserializeOwned>(table: toml::Table, what: &str) -> CliResult<T> {
    T::deserialize(toml::Value::Table(table)).map_err(|e| CliError::usage(format!("config [{what}]: {e}")))
}

pub fn required<T>(value: Option<T>, name: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::usage(format!("missing required setting `{name}` (flag or config file)")))
}
