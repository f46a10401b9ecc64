use std::path::Path;

/// Failures of the harness, split by CLI exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// Bad inputs: flags, files, hyperparameters. Exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Failures while running. Exit code 3.
    #[error("runtime error: {0}")]
    Runtime(String),
}

pub type LabResult<T> = Result<T, LabError>;

impl LabError {
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Config(_) => 2,
            LabError::Runtime(_) => 3,
        }
    }

    pub(crate) fn read(path: &Path, e: impl std::fmt::Display) -> Self {
        LabError::Config(format!("{}: {e}", path.display()))
    }

    pub(crate) fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        LabError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<tsc_core::Error> for LabError {
    fn from(e: tsc_core::Error) -> Self {
        use tsc_core::Error as E;
        match e {
            E::Network(_) | E::UnknownLane { .. } | E::Demand(_) | E::Config(_) | E::Checkpoint(_) => {
                LabError::Config(e.to_string())
            }
            _ => LabError::Runtime(e.to_string()),
        }
    }
}
