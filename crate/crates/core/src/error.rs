use thiserror::Error;

/// Errors produced by the control, estimation, simulation and experiment layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LqrError {
    #[error("Riccati iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NonConvergence { residual: f64, iterations: usize },

    #[error("inner matrix R + B^T P B is numerically singular")]
    SingularInnerMatrix,

    #[error("closed loop is not stable (spectral radius {spectral_radius})")]
    UnstableController { spectral_radius: f64 },

    #[error("invalid cost bound: {0}")]
    InvalidBound(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("horizon {horizon} is too short for warm-up length {tau0}")]
    HorizonTooShort { tau0: usize, horizon: usize },

    #[error("state norm exceeded overflow guard at t = {t}")]
    NumericOverflow { t: usize },

    #[error("scalar Riccati equation has no positive root (|a| >= 1 and b = 0)")]
    NoPositiveRoot,

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl LqrError {
    /// Whether the error stems from bad user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            LqrError::Config(_)
                | LqrError::DimensionMismatch(_)
                | LqrError::InvalidSystem(_)
                | LqrError::Io(_)
                | LqrError::HorizonTooShort { .. }
        )
    }
}

impl From<std::io::Error> for LqrError {
    fn from(e: std::io::Error) -> Self {
        LqrError::Io(e.to_string())
    }
}

impl From<csv::Error> for LqrError {
    fn from(e: csv::Error) -> Self {
        LqrError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LqrError {
    fn from(e: serde_json::Error) -> Self {
        LqrError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LqrError>;
