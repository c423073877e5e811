use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PHYSICS: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("physics error: {0}")]
    Physics(weakvar::Error),

    #[error("cannot access {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { key: key.into(), message: message.into() }
    }

    /// Sorts a library error into a physics failure or a bad setting of `key`.
    pub fn from_core(key: &str, err: weakvar::Error) -> Self {
        match err {
            weakvar::Error::VanishingOverlap { .. } | weakvar::Error::TranslationOverflow { .. } => CliError::Physics(err),
            other => CliError::config(key, other.to_string()),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Physics(_) => EXIT_PHYSICS,
            CliError::Config { .. } | CliError::Io { .. } => EXIT_CONFIG,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
