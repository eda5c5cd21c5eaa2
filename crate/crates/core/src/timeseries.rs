//! Month-indexed series and the alignment / windowing utilities every
//! analysis builds on.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A calendar month. Ordering is lexicographic on (year, month).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidMonth(format!("{year}-{month}")));
        }
        Ok(YearMonth {
            year,
            month: month as u8,
        })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month as u32
    }

    /// Months since year 0, January.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        YearMonth {
            year: ordinal.div_euclid(12) as i32,
            month: (ordinal.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn succ(self) -> Self {
        self.add_months(1)
    }

    pub fn pred(self) -> Self {
        self.add_months(-1)
    }

    pub fn add_months(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: YearMonth) -> i64 {
        other.ordinal() - self.ordinal()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidMonth(s.to_string());
        let s = s.trim();
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        if m.len() != 2 || y.is_empty() {
            return Err(bad());
        }
        let year: i32 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month).map_err(|_| bad())
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Inclusive month range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawWindow")]
pub struct SeriesWindow {
    from: YearMonth,
    to: YearMonth,
}

/// Accepts `{from, to}` or the `FROM..TO` text form.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawWindow {
    Text(String),
    Bounds { from: YearMonth, to: YearMonth },
}

impl TryFrom<RawWindow> for SeriesWindow {
    type Error = Error;

    fn try_from(raw: RawWindow) -> Result<Self> {
        match raw {
            RawWindow::Text(s) => s.parse(),
            RawWindow::Bounds { from, to } => SeriesWindow::new(from, to),
        }
    }
}

impl SeriesWindow {
    pub fn new(from: YearMonth, to: YearMonth) -> Result<Self> {
        if from > to {
            return Err(Error::invalid(format!("window start {from} is after end {to}")));
        }
        Ok(SeriesWindow { from, to })
    }

    pub fn from(&self) -> YearMonth {
        self.from
    }

    pub fn to(&self) -> YearMonth {
        self.to
    }

    pub fn len(&self) -> usize {
        (self.from.months_until(self.to) + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: YearMonth) -> bool {
        self.from <= m && m <= self.to
    }

    pub fn intersect(&self, other: &SeriesWindow) -> Option<SeriesWindow> {
        let from = self.from.max(other.from);
        let to = self.to.min(other.to);
        (from <= to).then_some(SeriesWindow { from, to })
    }

    pub fn months(&self) -> impl Iterator<Item = YearMonth> {
        let from = self.from;
        (0..self.len() as i64).map(move |i| from.add_months(i))
    }
}

impl fmt::Display for SeriesWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.from, self.to)
    }
}

/// Parses `FROM..TO`, e.g. `2010-01..2013-06`.
impl FromStr for SeriesWindow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| Error::invalid(format!("window `{s}` is not of the form FROM..TO")))?;
        SeriesWindow::new(a.parse()?, b.parse()?)
    }
}

/// A gap-free monthly signal: `values[i]` belongs to `start + i` months.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries")]
pub struct MonthlyTimeSeries {
    start: YearMonth,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSeries {
    start: YearMonth,
    values: Vec<f64>,
}

impl TryFrom<RawSeries> for MonthlyTimeSeries {
    type Error = Error;

    fn try_from(raw: RawSeries) -> Result<Self> {
        MonthlyTimeSeries::new(raw.start, raw.values)
    }
}

impl MonthlyTimeSeries {
    pub fn new(start: YearMonth, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("a series needs at least one value"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at {}",
                start.add_months(i as i64)
            )));
        }
        Ok(MonthlyTimeSeries { start, values })
    }

    /// Builds a series from (month, value) pairs in strictly increasing
    /// month order. Gaps are rejected, never imputed.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (YearMonth, f64)>) -> Result<Self> {
        let mut iter = pairs.into_iter();
        let (start, first) = iter
            .next()
            .ok_or_else(|| Error::invalid("a series needs at least one value"))?;
        let mut values = vec![first];
        let mut prev = start;
        for (m, v) in iter {
            if m <= prev {
                return Err(Error::invalid(format!(
                    "months must be strictly increasing: {m} follows {prev}"
                )));
            }
            if m != prev.succ() {
                return Err(Error::MissingMonth(prev.succ()));
            }
            values.push(v);
            prev = m;
        }
        MonthlyTimeSeries::new(start, values)
    }

    pub fn start(&self) -> YearMonth {
        self.start
    }

    pub fn end(&self) -> YearMonth {
        self.start.add_months(self.values.len() as i64 - 1)
    }

    pub fn range(&self) -> SeriesWindow {
        SeriesWindow {
            from: self.start,
            to: self.end(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, m: YearMonth) -> Option<f64> {
        let i = self.start.months_until(m);
        (i >= 0).then(|| self.values.get(i as usize).copied()).flatten()
    }

    /// Position of `m` in the value vector, if covered.
    pub fn index_of(&self, m: YearMonth) -> Option<usize> {
        let i = self.start.months_until(m);
        (i >= 0 && (i as usize) < self.values.len()).then_some(i as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = (YearMonth, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| (self.start.add_months(i as i64), v))
    }

    /// Applies `f` to every value, keeping the index.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        MonthlyTimeSeries::new(self.start, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Values for the months in `w ∩ range(self)`.
    pub fn slice(&self, w: &SeriesWindow) -> Result<Self> {
        let overlap = self.range().intersect(w).ok_or(Error::EmptyOverlap)?;
        let lo = self.start.months_until(overlap.from) as usize;
        let hi = lo + overlap.len();
        Ok(MonthlyTimeSeries {
            start: overlap.from,
            values: self.values[lo..hi].to_vec(),
        })
    }

    /// Centred moving average over `[t - half_window, t + half_window]`,
    /// with the window clipped to the series at both ends.
    pub fn rolling_mean(&self, half_window: usize) -> Self {
        let n = self.values.len();
        let values = (0..n)
            .map(|t| {
                let window = &self.values[t.saturating_sub(half_window)..(t + half_window + 1).min(n)];
                let mean = window.iter().sum::<f64>() / window.len() as f64;
                // rounding can push the mean of equal values off by an ulp
                let (min, max) = window
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                mean.clamp(min, max)
            })
            .collect();
        MonthlyTimeSeries {
            start: self.start,
            values,
        }
    }

    /// Reads the `month,value` CSV format.
    pub fn read_csv<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_error(source_name, 1, e))?.clone();
        if headers.len() != 2 || &headers[0] != "month" || &headers[1] != "value" {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line: 1,
                message: "expected header `month,value`".into(),
            });
        }
        let mut pairs = Vec::new();
        let mut prev: Option<YearMonth> = None;
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
            let value: f64 = rec[1]
                .parse()
                .map_err(|_| parse_err(format!("bad value `{}`", &rec[1])))?;
            if !value.is_finite() {
                return Err(parse_err(format!("non-finite value `{}`", &rec[1])));
            }
            if let Some(p) = prev {
                if month <= p {
                    return Err(parse_err(format!("month {month} does not follow {p}")));
                }
                if month != p.succ() {
                    return Err(parse_err(format!("missing month {}", p.succ())));
                }
            }
            prev = Some(month);
            pairs.push((month, value));
        }
        if pairs.is_empty() {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line: 1,
                message: "no data rows".into(),
            });
        }
        MonthlyTimeSeries::from_pairs(pairs)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["month", "value"]).map_err(csv_io)?;
        for (m, v) in self.iter() {
            w.write_record([m.to_string(), v.to_string()]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Restricts both series to the intersection of their month ranges.
pub fn align(
    a: &MonthlyTimeSeries,
    b: &MonthlyTimeSeries,
) -> Result<(MonthlyTimeSeries, MonthlyTimeSeries)> {
    let overlap = a.range().intersect(&b.range()).ok_or(Error::EmptyOverlap)?;
    Ok((a.slice(&overlap)?, b.slice(&overlap)?))
}

pub(crate) fn csv_error(source_name: &str, fallback_line: u64, e: csv::Error) -> Error {
    let line = e
        .position()
        .map_or(fallback_line, |p| p.line());
    Error::Parse {
        source_name: source_name.to_string(),
        line,
        message: e.to_string(),
    }
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv write failed: {other:?}")),
    }
}
