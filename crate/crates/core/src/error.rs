use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: day step {found} differs from the expected step {expected}")]
    NonUniformStep {
        line: usize,
        expected: i64,
        found: i64,
    },

    #[error("series is empty")]
    EmptySeries,

    #[error("invalid sampling: {0}")]
    InvalidSampling(String),

    #[error("window [{start}, {end}] is outside the series range [{first}, {last}]")]
    WindowOutOfRange {
        start: i64,
        end: i64,
        first: f64,
        last: f64,
    },

    #[error("invalid window: start day {start} is after end day {end}")]
    InvalidWindow { start: i64, end: i64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("relative error is undefined: truth is identically zero")]
    ZeroDenominator,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("t = {t} lies outside the basis domain [{min}, {max}]")]
    Domain { t: f64, min: f64, max: f64 },

    #[error("integration diverged at t = {t}")]
    Divergence { t: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),

    #[error("forecast diverged at step {step}")]
    ForecastDivergence { step: usize },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("missing holdout data: {0}")]
    MissingHoldout(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
