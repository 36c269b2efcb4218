use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("feedback taps do not form a primitive polynomial: period {period} < {expected}")]
    NonPrimitivePolynomial { period: u64, expected: u64 },
    #[error("LFSR seed must not be all zeros")]
    ZeroSeed,
    #[error("invalid sequence parameters: {0}")]
    InvalidSequence(String),

    #[error("negative delay {0} us")]
    NegativeDelay(f64),
    #[error("tap set is empty")]
    EmptyTapSet,
    #[error("model schema error: {0}")]
    SchemaError(String),
    #[error("segments overlap: [{0}, {1}) and [{2}, {3})")]
    OverlappingSegments(f64, f64, f64, f64),
    #[error("segment interval [{0}, {1}) is empty or negative")]
    NegativeInterval(f64, f64),
    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("tap delay {delay_us} us is not on the {sample_rate_hz} Hz sample grid")]
    OffGridDelay { delay_us: f64, sample_rate_hz: f64 },
    #[error("signal has zero power")]
    ZeroSignalPower,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("input of {len} samples is shorter than the sequence length {needed}")]
    InputTooShort { len: usize, needed: usize },
    #[error("no complete frame fits: need {needed} correlation samples, have {available}")]
    NoCompleteFrame { needed: usize, available: usize },
    #[error("noise guard region is empty")]
    EmptyGuard,
    #[error("delay spread is zero")]
    ZeroSpread,

    #[error("format error: {0}")]
    FormatError(String),
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("non-finite sample at line {0}")]
    NonFiniteSample(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPrimitivePolynomial { .. } => "NonPrimitivePolynomial",
            Error::ZeroSeed => "ZeroSeed",
            Error::InvalidSequence(_) => "InvalidSequence",
            Error::NegativeDelay(_) => "NegativeDelay",
            Error::EmptyTapSet => "EmptyTapSet",
            Error::SchemaError(_) => "SchemaError",
            Error::OverlappingSegments(..) => "OverlappingSegments",
            Error::NegativeInterval(..) => "NegativeInterval",
            Error::UnknownModel(_) => "UnknownModel",
            Error::OffGridDelay { .. } => "OffGridDelay",
            Error::ZeroSignalPower => "ZeroSignalPower",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::InputTooShort { .. } => "InputTooShort",
            Error::NoCompleteFrame { .. } => "NoCompleteFrame",
            Error::EmptyGuard => "EmptyGuard",
            Error::ZeroSpread => "ZeroSpread",
            Error::FormatError(_) => "FormatError",
            Error::ParseError { .. } => "ParseError",
            Error::NonFiniteSample(_) => "NonFiniteSample",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }

    /// True for failures caused by malformed files or config rather than by
    /// the numbers themselves.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::SchemaError(_)
                | Error::FormatError(_)
                | Error::ParseError { .. }
                | Error::NonFiniteSample(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::UnknownModel(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
