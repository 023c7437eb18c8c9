use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("broken price chain at event {index}: {detail}")]
    BrokenChain { index: usize, detail: String },

    #[error("invariant violated at {location}: {detail}")]
    InvariantViolation { location: String, detail: String },

    #[error("schema error at line {line}: {detail}")]
    SchemaError { line: u64, detail: String },

    #[error("price {price} is not on the half-tick grid for tick size {tick_size}")]
    NonHalfTickGap { price: f64, tick_size: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular system (pivot ratio {ratio:e}); raise lambda above zero")]
    SingularSystem { ratio: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("history window too short: need {needed}, got {got}")]
    WindowTooShort { needed: usize, got: usize },

    #[error("alpha {0} outside [0, 1)")]
    AlphaOutOfRange(f64),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::BrokenChain { .. } => "BrokenChain",
            Error::InvariantViolation { .. } => "InvariantViolation",
            Error::SchemaError { .. } => "SchemaError",
            Error::NonHalfTickGap { .. } => "NonHalfTickGap",
            Error::InsufficientData(_) => "InsufficientData",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::WindowTooShort { .. } => "WindowTooShort",
            Error::AlphaOutOfRange(_) => "AlphaOutOfRange",
            Error::ConfigInvalid(_) => "ConfigInvalid",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
