use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tied values detected in column {column}")]
    TiesDetected { column: usize },

    #[error("column {column} is constant; cannot break ties")]
    DegenerateColumn { column: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("integration error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    ToleranceNotMet { estimate: f64, tolerance: f64 },

    #[error("coordinate {index} = {value} lies on the boundary of [0,1]")]
    BoundaryPoint { index: usize, value: f64 },

    #[error("no sampler available for the {0} family")]
    UnsupportedSampler(&'static str),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("quadrature error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    QuadratureFailure { estimate: f64, tolerance: f64 },

    #[error("Gumbel calibration needs c_n > 1 pairs (d >= 3), got d = {d}")]
    DegenerateDimension { d: usize },

    #[error("dimension d = {d} is too small, need at least {min}")]
    DimensionTooSmall { d: usize, min: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the input data rather than by usage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::TiesDetected { .. } | Error::DegenerateColumn { .. } | Error::InvalidData(_) | Error::Csv(_)
        )
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
