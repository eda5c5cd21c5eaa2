//! Signal derivation and analysis for studying vaccination uptake against
//! media attention: registry ingestion, tipping-point detection, AR-based
//! deseasonalisation with cross-correlation, and a family of nowcasting
//! models driven by query or media frequencies.

pub mod changepoint;
pub mod error;
pub mod ingest;
pub mod nowcast;
pub mod seasonal;
pub mod stats;
pub mod timeseries;

pub use error::{Error, ErrorKind, Result};
pub use timeseries::{align, MonthlyTimeSeries, SeriesWindow, YearMonth};
