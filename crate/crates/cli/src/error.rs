use thiserror::Error;

/// Errors of a command, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid input files, or data the
    /// pipeline cannot model.
    #[error("{0}")]
    Input(String),
    /// Failures that are not the caller's fault, such as writing output.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<flowmap_core::Error> for CliError {
    fn from(e: flowmap_core::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Tag an error that happened while producing output as internal.
pub fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}
