use std::fmt;
use std::process::ExitCode;

/// Failure classes mapped onto the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Validation, consistency or provenance failure: exit 1.
    Domain(String),
    /// Unreadable input, unwritable output or bad arguments: exit 2.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Domain(_) => ExitCode::from(1),
            CliError::Io(_) => ExitCode::from(2),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}
