use ducs::config::ConfigError;
use ducs::data::DataError;
use ducs::dynamics::TraceError;
use ducs::model::ModelError;
use ducs::numerics::NumericError;
use ducs::selection::SelectionError;
use thiserror::Error;

/// Every failure the CLI can report, grouped by exit status.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{failed} of {total} experiment cells failed")]
    Partial { failed: usize, total: usize },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 2,
            HarnessError::Data(_) => 3,
            HarnessError::Numeric(_) => 4,
            HarnessError::Partial { .. } => 5,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        HarnessError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<ConfigError> for HarnessError {
    fn from(e: ConfigError) -> Self {
        HarnessError::Usage(e.to_string())
    }
}

impl From<DataError> for HarnessError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(_) => HarnessError::Usage(e.to_string()),
            _ => HarnessError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFiniteLoss { .. }
            | ModelError::NonFiniteParameters { .. }
            | ModelError::Evidential(_) => HarnessError::Numeric(e.to_string()),
            ModelError::InvalidLayers(_)
            | ModelError::InvalidConfig(_)
            | ModelError::Config(_)
            | ModelError::DimensionMismatch { .. }
            | ModelError::ClassMismatch { .. } => HarnessError::Usage(e.to_string()),
            ModelError::EmptySplit | ModelError::Recorder(_) => HarnessError::Data(e.to_string()),
        }
    }
}

impl From<NumericError> for HarnessError {
    fn from(e: NumericError) -> Self {
        match e {
            NumericError::WindowOutOfBounds { .. } | NumericError::EmptyWindow => {
                HarnessError::Usage(e.to_string())
            }
            _ => HarnessError::Numeric(e.to_string()),
        }
    }
}

impl From<SelectionError> for HarnessError {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::Window(inner) => inner.into(),
            SelectionError::Beta(_) | SelectionError::Grid(_) => HarnessError::Usage(e.to_string()),
            _ => HarnessError::Data(e.to_string()),
        }
    }
}

impl From<TraceError> for HarnessError {
    fn from(e: TraceError) -> Self {
        HarnessError::Data(e.to_string())
    }
}
