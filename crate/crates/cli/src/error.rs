use std::fmt;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const VERIFY_FAILED: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const GUARD: u8 = 3;
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable inputs or malformed files.
    Usage(String),
    /// The request is well-formed but too large to run here.
    Guard(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Guard(_) => exit::GUARD,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Guard(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<flopscale::Error> for CliError {
    fn from(e: flopscale::Error) -> Self {
        match e {
            flopscale::Error::TooLarge { .. } => CliError::Guard(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
