use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] flowforge::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("unknown demo `{0}`; expected one of: {names}", names = crate::demo::NAMES.join(", "))]
    UnknownDemo(String),

    #[error("measured error {value:e} exceeds tolerance {eps:e}")]
    ToleranceExceeded { value: f64, eps: f64 },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        CliError::Core(flowforge::Error::Parse {
            line,
            column,
            message: message.into(),
        })
    }

    pub fn exit_code(&self) -> u8 {
        use flowforge::Error as E;
        match self {
            CliError::Core(E::NegativeDeterminant { .. }) => 2,
            CliError::Core(E::Parse { .. }) => 3,
            CliError::Core(E::BudgetExceeded { .. }) => 4,
            CliError::Core(E::ConditionViolated(_)) => 5,
            CliError::UnknownDemo(_) => 6,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
