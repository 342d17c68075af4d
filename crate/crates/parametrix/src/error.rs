use parametrix_core::Error as CoreError;
use thiserror::Error;

/// Command failures, each tied to a fixed process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input. Exit 2.
    #[error("parse error: {0}")]
    Parse(String),
    /// Input parses but violates the problem assumptions. Exit 3.
    #[error("validation failure: {0}")]
    Validation(String),
    /// The Volterra series did not settle. Exit 4.
    #[error("{0}")]
    NonConvergence(String),
    /// A verification or comparison check failed. Exit 1.
    #[error("{0}")]
    CheckFailed(String),
    /// Any other runtime failure, e.g. an unwritable output directory. Exit 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::NonConvergence(_) => 4,
            CliError::CheckFailed(_) | CliError::Runtime(_) => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidSpec(_) | CoreError::BadConfig(_) | CoreError::OutOfDomain { .. } => {
                CliError::Validation(e.to_string())
            }
            CoreError::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
