use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("split fraction {0} is outside the open interval (0, 1)")]
    AlphaOutOfRange(f64),

    #[error("measure `{measure}` cannot score a methodology producing {output_class} outputs")]
    IncompatibleMeasure {
        measure: String,
        output_class: String,
    },

    #[error("{what} must be strictly positive and finite, got {value}")]
    NonPositiveVariance { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("split would leave arm `{arm}` empty ({units} units, alpha = {alpha})")]
    EmptySplit {
        arm: &'static str,
        units: usize,
        alpha: f64,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("at least two tests are required, got {0}")]
    InsufficientTests(usize),

    #[error("confidence level {0} is outside the open interval (0, 1)")]
    InvalidLevel(f64),

    #[error("baseline performance {value} is within {tolerance} of zero; relative difference is undefined")]
    DegenerateBaseline { value: f64, tolerance: f64 },

    #[error("numeric estimand did not reach precision {requested} (last error estimate {achieved})")]
    PrecisionUnreachable { requested: f64, achieved: f64 },

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: tau_sq must be strictly positive and finite, got {value}")]
    RowNonPositiveVariance { row: usize, value: f64 },

    #[error("duplicate test_id `{test_id}` at row {row}")]
    DuplicateTestId { test_id: String, row: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialization(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable category, printed as the prefix of CLI diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::AlphaOutOfRange(_) => "AlphaOutOfRange",
            Error::IncompatibleMeasure { .. } => "IncompatibleMeasure",
            Error::NonPositiveVariance { .. } | Error::RowNonPositiveVariance { .. } => {
                "NonPositiveVariance"
            }
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::InvalidSize(_) => "InvalidSize",
            Error::EmptySplit { .. } => "EmptySplit",
            Error::EmptyInput(_) => "EmptyInput",
            Error::InsufficientTests(_) => "InsufficientTests",
            Error::InvalidLevel(_) => "InvalidLevel",
            Error::DegenerateBaseline { .. } => "DegenerateBaseline",
            Error::PrecisionUnreachable { .. } => "PrecisionUnreachable",
            Error::Parse { .. } => "ParseError",
            Error::DuplicateTestId { .. } => "DuplicateTestId",
            Error::Io { .. } => "IoError",
            Error::Serialization(_) => "SerializationError",
            Error::Config(_) => "ConfigError",
        }
    }

    /// Process exit code; distinct per category. 2 is left to the argument parser.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 3,
            Error::Parse { .. } => 4,
            Error::NonPositiveVariance { .. } | Error::RowNonPositiveVariance { .. } => 5,
            Error::DuplicateTestId { .. } => 6,
            Error::AlphaOutOfRange(_) => 7,
            Error::IncompatibleMeasure { .. } => 8,
            Error::InvalidParameter(_) => 9,
            Error::InvalidSize(_) => 10,
            Error::EmptySplit { .. } => 11,
            Error::EmptyInput(_) => 12,
            Error::InsufficientTests(_) => 13,
            Error::InvalidLevel(_) => 14,
            Error::DegenerateBaseline { .. } => 15,
            Error::PrecisionUnreachable { .. } => 16,
            Error::Serialization(_) => 17,
            Error::Config(_) => 18,
        }
    }
}
