//! Input reading with checksums, and deterministic report output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use vaxmedia::nowcast::ExogPanel;
use vaxmedia::{MonthlyTimeSeries, SeriesWindow};

use crate::config::Globals;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
struct Report<'a, C: Serialize, R: Serialize> {
    command: &'a str,
    config: Resolved<'a, C>,
    inputs: &'a [InputDigest],
    result: R,
}

#[derive(Serialize)]
struct Resolved<'a, C: Serialize> {
    #[serde(flatten)]
    globals: &'a Globals,
    #[serde(flatten)]
    settings: &'a C,
}

pub struct Run {
    pub globals: Globals,
    inputs: Vec<InputDigest>,
}

impl Run {
    pub fn new(globals: Globals) -> Self {
        Run { globals, inputs: Vec::new() }
    }

    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let digest = Sha256::digest(&bytes);
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: format!("{digest:x}"),
        });
        Ok(bytes)
    }

    pub fn read_series(&mut self, path: &Path) -> CliResult<MonthlyTimeSeries> {
        let bytes = self.read(path)?;
        Ok(MonthlyTimeSeries::read_csv(bytes.as_slice(), &path.display().to_string())?)
    }

    pub fn read_panel(&mut self, path: &Path) -> CliResult<ExogPanel> {
        let bytes = self.read(path)?;
        Ok(ExogPanel::read_csv(bytes.as_slice(), &path.display().to_string())?)
    }

    pub fn read_windowed(&mut self, path: &Path) -> CliResult<MonthlyTimeSeries> {
        let s = self.read_series(path)?;
        self.windowed(s)
    }

    /// Restricts a series to the global `--window`, if any.
    pub fn windowed(&self, s: MonthlyTimeSeries) -> CliResult<MonthlyTimeSeries> {
        match &self.globals.window {
            Some(w) => Ok(s.slice(w)?),
            None => Ok(s),
        }
    }

    pub fn window(&self) -> Option<SeriesWindow> {
        self.globals.window
    }

    fn out_path(&self, name: &str) -> CliResult<PathBuf> {
        let dir = self.globals.out.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
        Ok(dir.join(name))
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.out_path(name)?;
        fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        Ok(path)
    }

    pub fn write_with(
        &self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> vaxmedia::Result<()>,
    ) -> CliResult<PathBuf> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write_bytes(name, &buf)
    }

    /// Writes a series in the `month,value` format the other commands read.
    pub fn write_series(&self, name: &str, s: &MonthlyTimeSeries) -> CliResult<PathBuf> {
        self.write_with(name, |w| s.write_csv(w))
    }

    /// Writes `{command, config, inputs, result}` as pretty JSON.
    pub fn report<C: Serialize, R: Serialize>(
        &self,
        name: &str,
        command: &str,
        settings: &C,
        result: R,
    ) -> CliResult<PathBuf> {
        let report = Report {
            command,
            config: Resolved { globals: &self.globals, settings },
            inputs: &self.inputs,
            result,
        };
        let mut text = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::usage(format!("cannot serialise report: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }
}
