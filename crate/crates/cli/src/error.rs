use boxforge_core::dataset::DatasetError;
use boxforge_core::diffusion::{DiffusionError, ScheduleError};
use boxforge_nn::NnError;
use thiserror::Error;

/// Command failure, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or inputs (exit 2).
    #[error("{0}")]
    Validation(String),
    /// Failure while doing valid work (exit 3).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DiffusionError> for CliError {
    fn from(e: DiffusionError) -> Self {
        match e {
            DiffusionError::NonFinite { .. } | DiffusionError::Predictor { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite { .. } => CliError::Runtime(e.to_string()),
            NnError::Io { ref source, .. } if source.kind() != std::io::ErrorKind::NotFound => CliError::Runtime(e.to_string()),
            NnError::Diffusion(d) => d.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
