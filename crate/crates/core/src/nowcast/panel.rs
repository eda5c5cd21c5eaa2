use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{csv_error, csv_io, MonthlyTimeSeries, SeriesWindow, YearMonth};

/// Query (or media) frequency series sharing one month range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPanel")]
pub struct ExogPanel {
    names: Vec<String>,
    series: Vec<MonthlyTimeSeries>,
}

#[derive(Deserialize)]
struct RawPanel {
    names: Vec<String>,
    series: Vec<MonthlyTimeSeries>,
}

impl TryFrom<RawPanel> for ExogPanel {
    type Error = Error;
    fn try_from(raw: RawPanel) -> Result<Self> {
        ExogPanel::new(raw.names, raw.series)
    }
}

impl ExogPanel {
    pub fn new(names: Vec<String>, series: Vec<MonthlyTimeSeries>) -> Result<Self> {
        if names.len() != series.len() {
            return Err(Error::LengthMismatch(names.len(), series.len()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate query name `{name}`")));
            }
        }
        if let Some(first) = series.first() {
            let range = first.range();
            if let Some((i, _)) = series.iter().enumerate().find(|(_, s)| s.range() != range) {
                return Err(Error::invalid(format!(
                    "query `{}` does not share the panel's month range",
                    names[i]
                )));
            }
        }
        Ok(ExogPanel { names, series })
    }

    /// A panel with no queries.
    pub fn empty() -> Self {
        ExogPanel { names: Vec::new(), series: Vec::new() }
    }

    pub fn k(&self) -> usize {
        self.series.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn series(&self) -> &[MonthlyTimeSeries] {
        &self.series
    }

    pub fn get(&self, name: &str) -> Option<&MonthlyTimeSeries> {
        self.names.iter().position(|n| n == name).map(|i| &self.series[i])
    }

    /// `None` for an empty panel.
    pub fn range(&self) -> Option<SeriesWindow> {
        self.series.first().map(|s| s.range())
    }

    /// The query values at month `m`, in panel order.
    pub fn row(&self, m: YearMonth) -> Option<Vec<f64>> {
        self.series.iter().map(|s| s.get(m)).collect()
    }

    pub fn slice(&self, w: &SeriesWindow) -> Result<Self> {
        Ok(ExogPanel {
            names: self.names.clone(),
            series: self.series.iter().map(|s| s.slice(w)).collect::<Result<_>>()?,
        })
    }

    /// Keeps only the named queries, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Self> {
        let series = names
            .iter()
            .map(|n| {
                self.get(n)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("unknown query `{n}`")))
            })
            .collect::<Result<_>>()?;
        ExogPanel::new(names.to_vec(), series)
    }

    /// Reads the wide `month,<name>,<name>,...` CSV layout.
    pub fn read_csv<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_error(source_name, 1, e))?.clone();
        if headers.is_empty() || &headers[0] != "month" {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line: 1,
                message: "expected header `month,<query>,...`".into(),
            });
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut start = None;
        let mut prev: Option<YearMonth> = None;
        let mut columns = vec![Vec::new(); names.len()];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(source_name, 0, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let parse_err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line,
                message,
            };
            let month: YearMonth = rec[0]
                .parse()
                .map_err(|_| parse_err(format!("bad month `{}`", &rec[0])))?;
            if let Some(p) = prev {
                if month != p.succ() {
                    return Err(parse_err(format!("month {month} does not follow {p}")));
                }
            }
            start.get_or_insert(month);
            prev = Some(month);
            for (j, col) in columns.iter_mut().enumerate() {
                let raw = &rec[j + 1];
                let v: f64 = raw
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| parse_err(format!("bad value `{raw}` for `{}`", names[j])))?;
                col.push(v);
            }
        }
        let start = start.ok_or_else(|| Error::Parse {
            source_name: source_name.to_string(),
            line: 1,
            message: "no data rows".into(),
        })?;
        let series = columns
            .into_iter()
            .map(|c| MonthlyTimeSeries::new(start, c))
            .collect::<Result<_>>()?;
        ExogPanel::new(names, series)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["month".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(csv_io)?;
        if let Some(range) = self.range() {
            for m in range.months() {
                let mut rec = vec![m.to_string()];
                rec.extend(self.row(m).expect("month in range").iter().map(f64::to_string));
                w.write_record(&rec).map_err(csv_io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
