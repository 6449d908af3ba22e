use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmdError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("underdetermined problem: {pairs} snapshot pairs for state dimension {dim}; the model would overfit, gather at least {dim} pairs")]
    Underdetermined { pairs: usize, dim: usize },

    #[error("window of {w} pairs is smaller than state dimension {dim}")]
    WindowTooSmall { w: usize, dim: usize },

    #[error("rank deficient or ill-conditioned Gram matrix (condition estimate {cond:.3e}); {hint}")]
    Rank { cond: f64, hint: String },

    #[error("ill-conditioned update: {0}")]
    Conditioning(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite value at {0}")]
    Data(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl DmdError {
    /// True for errors caused by the caller's configuration rather than the data.
    pub fn is_config(&self) -> bool {
        matches!(self, DmdError::Parameter(_) | DmdError::Config(_) | DmdError::Io(_))
    }
}

impl From<std::io::Error> for DmdError {
    fn from(e: std::io::Error) -> Self {
        DmdError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DmdError>;
