use thiserror::Error;

use crate::timeseries::YearMonth;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input, I/O failure or invalid configuration.
    Input,
    /// A statistical precondition does not hold for the data.
    Precondition,
    /// An iterative solver stopped before meeting its tolerance.
    Convergence,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid month `{0}`")]
    InvalidMonth(String),

    #[error("month ranges do not overlap")]
    EmptyOverlap,

    #[error("missing data for month {0}")]
    MissingMonth(YearMonth),

    #[error("eligible population is zero in {0}")]
    ZeroDenominator(YearMonth),

    #[error("no cohort data for {0}")]
    MissingCohort(String),

    #[error("unknown stance label `{0}`")]
    UnknownStance(String),

    #[error("input has zero variance")]
    ConstantInput,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("need more rows than columns: {rows} rows, {cols} columns")]
    TooFewRows { rows: usize, cols: usize },

    #[error("segment too short: {got} months, need at least {needed}")]
    SegmentTooShort { needed: usize, got: usize },

    #[error("a segment is constant for split {0}")]
    ConstantSegment(YearMonth),

    #[error("series too short: need {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("no convergence after {iterations} iterations (final gap {gap:e})")]
    NotConverged { iterations: usize, gap: f64 },

    #[error("kernel matrix is not positive definite even with jitter")]
    NotPositiveDefinite,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("need at least {needed} samples to grow a tree, got {got}")]
    DegenerateTarget { needed: usize, got: usize },

    #[error("{0}")]
    InvalidInput(String),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidMonth(_)
            | Error::UnknownStance(_)
            | Error::InvalidInput(_)
            | Error::Parse { .. }
            | Error::Io(_) => ErrorKind::Input,
            Error::NotConverged { .. } => ErrorKind::Convergence,
            _ => ErrorKind::Precondition,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
