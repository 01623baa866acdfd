use std::fmt;

use harforge_core::data::DataError;
use harforge_core::eval::EvalError;
use harforge_core::model::ModelError;
use harforge_core::trainer::TrainError;

/// A failed command. The variant decides the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input files: exit 1.
    Input(anyhow::Error),
    /// Failure while computing or writing results: exit 2.
    Runtime(anyhow::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn input(msg: impl fmt::Display) -> Self {
        CliError::Input(anyhow::anyhow!("{msg}"))
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        CliError::Runtime(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = match self {
            CliError::Input(e) | CliError::Runtime(e) => e,
        };
        write!(f, "{e:#}")
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Input(e.into())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(_) | EvalError::Model(_) | EvalError::Tensor(_) => CliError::Runtime(e.into()),
            _ => CliError::Input(e.into()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::Unavailable(_) | ModelError::Format(_) => CliError::Input(e.into()),
            _ => CliError::Runtime(e.into()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_config() || matches!(e, TrainError::Checkpoint(_)) {
            CliError::Input(e.into())
        } else {
            CliError::Runtime(e.into())
        }
    }
}
