use entop_core::interferometer::InterferometerError;
use entop_core::metrics::MetricError;
use entop_core::opalg::OpalgError;
use entop_core::operators::parse::ParseError;
use entop_core::operators::OperatorError;
use entop_core::tomography::TomographyError;
use thiserror::Error;

/// Process-level error classes.  Each maps to a documented exit code so
/// scripts can branch on failure kind without parsing stderr.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("post-selection kept no amplitude: {0}")]
    ZeroSuccess(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical(_) => 3,
            AppError::ZeroSuccess(_) => 4,
            AppError::Io(_) => 1,
        }
    }
}

impl From<ParseError> for AppError {
    fn from(e: ParseError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<OperatorError> for AppError {
    fn from(e: OperatorError) -> Self {
        match e {
            // An annihilated input is the post-selection losing everything,
            // not a malformed config.
            OperatorError::Annihilated { .. } => AppError::ZeroSuccess(e.to_string()),
            OperatorError::Linalg(inner) => AppError::Numerical(inner.to_string()),
            other => AppError::Config(other.to_string()),
        }
    }
}

impl From<InterferometerError> for AppError {
    fn from(e: InterferometerError) -> Self {
        match e {
            InterferometerError::ZeroSuccess { .. } => AppError::ZeroSuccess(e.to_string()),
            InterferometerError::InvalidConfig(_) | InterferometerError::AnalyticUnsupported { .. } => {
                AppError::Config(e.to_string())
            }
            InterferometerError::Operator(inner) => inner.into(),
            other => AppError::Numerical(other.to_string()),
        }
    }
}

impl From<TomographyError> for AppError {
    fn from(e: TomographyError) -> Self {
        match e {
            TomographyError::Io(inner) => AppError::Io(inner),
            TomographyError::Operator(inner) => inner.into(),
            other => AppError::Numerical(other.to_string()),
        }
    }
}

impl From<MetricError> for AppError {
    fn from(e: MetricError) -> Self {
        AppError::Numerical(e.to_string())
    }
}

impl From<OpalgError> for AppError {
    fn from(e: OpalgError) -> Self {
        AppError::Numerical(e.to_string())
    }
}
