use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced to the shell, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("cannot read {path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] sta_core::Error),

    /// The command ran and wrote its outputs, but part of the result failed.
    #[error("{0}")]
    Partial(String, sta_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input { .. } | CliError::Output { .. } => 2,
            CliError::Core(e) | CliError::Partial(_, e) => core_code(e),
        }
    }

    pub fn input(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        CliError::Input {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

fn core_code(e: &sta_core::Error) -> i32 {
    match e {
        sta_core::Error::Convergence { .. } => 4,
        _ => 3,
    }
}

pub type CliResult<T> = Result<T, CliError>;
