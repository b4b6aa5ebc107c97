use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameters that violate a type invariant.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("unknown access point preset {name:?} (available: {available})")]
    UnknownPreset { name: String, available: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// A scenario file problem, with the 1-based line it was found on.
    #[error("scenario error at line {line}: {message}")]
    Scenario { line: usize, message: String },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("undefined impact: {0}")]
    UndefinedImpact(String),

    /// A violated simulator precondition, e.g. scheduling an event in the past.
    #[error("logic error: {0}")]
    Logic(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category, used by the CLI for exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) | Error::InvalidParams(_) => "invalid-input",
            Error::InsufficientData { .. } => "insufficient-data",
            Error::DegenerateFit(_) => "degenerate-fit",
            Error::UnknownPreset { .. } | Error::Config(_) | Error::Scenario { .. } => "config",
            Error::Calibration(_) => "calibration",
            Error::UndefinedImpact(_) => "undefined-impact",
            Error::Logic(_) => "logic",
            Error::Io(_) | Error::Csv(_) => "io",
        }
    }
}
