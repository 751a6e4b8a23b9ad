use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {field}: {message}")]
    Config {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    NotConverged(String),

    #[error(transparent)]
    Core(#[from] occu::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use occu::Error as E;
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Core(e) => match e {
                E::Io { .. } | E::InvalidInput(_) | E::DomainError(_) => 2,
                E::NonFiniteResult(_)
                | E::NonFiniteObjective { .. }
                | E::NonFiniteGradient(_)
                | E::AllDivergent { .. } => 3,
                _ => 4,
            },
        }
    }

    pub fn field(path: impl Into<PathBuf>, field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
