use netglm_core::Error as CoreError;
use thiserror::Error;

/// Failures of a command, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments (exit 2).
    #[error("config error: {0}")]
    Config(String),
    /// Unreadable, malformed, or inconsistent data and chain files (exit 3).
    #[error("data error: {0}")]
    Data(String),
    /// A numerical failure or unstable simulation (exit 4).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Usage(_) => CliError::Config(e.to_string()),
            CoreError::Domain(_) | CoreError::Shape(_) => CliError::Data(e.to_string()),
            CoreError::Numerical(_) | CoreError::Stability(_) => CliError::Numerical(e.to_string()),
        }
    }
}
