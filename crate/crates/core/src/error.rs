use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants fall into three families that the command line maps onto exit
/// codes: configuration problems, data problems and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {key}: {message}")]
    Config { key: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("non-consecutive months at row {row}: {previous} followed by {found}")]
    NonConsecutiveMonths {
        row: usize,
        previous: String,
        found: String,
    },

    #[error("duplicate month {month} at row {row}")]
    DuplicateMonth { row: usize, month: String },

    #[error("non-monotone dates at row {row}: {found} after {previous}")]
    NonMonotoneDates {
        row: usize,
        previous: String,
        found: String,
    },

    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("variable `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty delay matrix")]
    EmptyDelayMatrix,

    #[error("empty {0} set after split")]
    EmptySplit(&'static str),

    #[error("requested {requested} views but only {available} distinct views exist")]
    TooManyViews { requested: usize, available: u128 },

    #[error("need {needed} rows, have {available}")]
    NotEnoughRows { needed: usize, available: usize },

    #[error("undefined correlation: constant input")]
    UndefinedCorrelation,

    #[error("sample too small: need {needed}, got {given}")]
    InsufficientSample { needed: usize, given: usize },

    #[error("no usable view for target time {0}")]
    NoUsableView(i64),

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("EM did not converge within {iterations} iterations in any restart")]
    EmNonConvergence { iterations: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 for configuration, 3 for data, 4 for numerics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) | Error::TooManyViews { .. } => 2,
            Error::NonFinite { .. }
            | Error::EmNonConvergence { .. }
            | Error::Numerical(_)
            | Error::UndefinedCorrelation => 4,
            Error::Context { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
