use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid flags or config; exit code 2.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] cadmatch_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(cadmatch_core::Error::Config(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}
