use thiserror::Error;

/// Failures surfaced to the shell. Each maps to an exit code and a stable
/// `E:<kind>:` prefix on standard error.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] wmmd_core::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Core(wmmd_core::Error::Io(_)) => "io",
            CliError::Core(_) => "compute",
        }
    }
}
