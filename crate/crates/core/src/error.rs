use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: file has no data rows")]
    EmptyFile { path: String },

    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("missing date {expected} (next row is {found})")]
    MissingDate { expected: NaiveDate, found: NaiveDate },

    #[error("line {line}: negative value {value} in column {column}")]
    NegativeValue {
        line: usize,
        column: &'static str,
        value: f64,
    },

    #[error("population density must be positive, got {0}")]
    ZeroDensity(f64),

    #[error("feature {feature} is constant ({value}); cannot fit a min-max scaler")]
    ConstantFeature { feature: &'static str, value: f64 },

    #[error("date range {from}..={to} is outside the series ({start}..={end})")]
    OutOfRange {
        from: NaiveDate,
        to: NaiveDate,
        start: NaiveDate,
        end: NaiveDate,
    },

    #[error("series of length {length} is too short for look-back {lookback}")]
    SeriesTooShort { length: usize, lookback: usize },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset has no samples")]
    EmptyDataset,

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    DivergedLoss { epoch: usize, loss: f64 },

    #[error("context has {actual} days but the model look-back is {expected}")]
    ContextLengthMismatch { expected: usize, actual: usize },

    #[error("non-finite prediction at forecast step {step}")]
    NonFinitePrediction { step: usize },

    #[error("validation RMSE of member {member} is zero for {variable}")]
    ZeroRmse { member: String, variable: &'static str },

    #[error("ensemble has no members")]
    EmptyMemberList,

    #[error("dates do not line up: {0}")]
    DateMisalignment(String),

    #[error("member mismatch: {0}")]
    MemberMismatch(String),

    #[error("original value is zero at position {index}; relative error is undefined")]
    ZeroOriginal { index: usize },

    #[error("length mismatch: {original} original vs {predicted} predicted")]
    LengthMismatch { original: usize, predicted: usize },

    #[error("member {member} failed: {source}")]
    PartialFailure {
        member: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyFile { .. } => "EmptyFile",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::MissingDate { .. } => "MissingDate",
            Error::NegativeValue { .. } => "NegativeValue",
            Error::ZeroDensity(_) => "ZeroDensity",
            Error::ConstantFeature { .. } => "ConstantFeature",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::SeriesTooShort { .. } => "SeriesTooShort",
            Error::InvalidSeries(_) => "InvalidSeries",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptyDataset => "EmptyDataset",
            Error::DivergedLoss { .. } => "DivergedLoss",
            Error::ContextLengthMismatch { .. } => "ContextLengthMismatch",
            Error::NonFinitePrediction { .. } => "NonFinitePrediction",
            Error::ZeroRmse { .. } => "ZeroRmse",
            Error::EmptyMemberList => "EmptyMemberList",
            Error::DateMisalignment(_) => "DateMisalignment",
            Error::MemberMismatch(_) => "MemberMismatch",
            Error::ZeroOriginal { .. } => "ZeroOriginal",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::PartialFailure { .. } => "PartialFailure",
            Error::Io { .. } => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
            Error::Toml(_) => "Toml",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
