use thiserror::Error;

/// Failures of the command-line front end. Everything except
/// [`CliError::Internal`] is the caller's fault and exits with code 2.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CliError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("{field}: index {index} out of range 1..={n}")]
    IndexOutOfRange { field: String, index: u8, n: u8 },
    #[error("{field}: unknown symbol `{name}`")]
    UnknownSymbol { field: String, name: String },
    #[error("{0}")]
    Usage(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Parse { location: location.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 3,
            _ => 2,
        }
    }
}
