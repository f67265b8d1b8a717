use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{file}:{line}: {message}")]
    Format {
        file: String,
        line: usize,
        message: String,
    },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] sicerp_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(file: impl std::fmt::Display, line: usize, message: impl Into<String>) -> Self {
        CliError::Format {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }

    /// 2 for configuration errors, 4 for solver non-convergence, 3 for
    /// everything that is wrong with the data.
    pub fn exit_code(&self) -> i32 {
        use sicerp_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Spec(_) => 2,
            CliError::Core(e) => match e.root() {
                E::NotConverged { .. } => 4,
                E::InvalidArgument(_) => 2,
                _ => 3,
            },
            CliError::Format { .. } | CliError::NotFound(_) | CliError::Io { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
