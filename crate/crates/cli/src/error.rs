use std::process::ExitCode;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error in {field}: {message}")]
    Config { field: String, message: String },
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Core(#[from] temrl_core::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        HarnessError::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        HarnessError::Io { path: path.as_ref().display().to_string(), message: err.to_string() }
    }

    /// Every harness error is a configuration problem from the caller's side.
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(EXIT_CONFIG_ERROR)
    }
}

pub const EXIT_SUCCESS: u8 = 0;
pub const EXIT_VERIFICATION_FAILURE: u8 = 1;
pub const EXIT_CONFIG_ERROR: u8 = 2;
