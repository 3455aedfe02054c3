use thiserror::Error;

use vpmix::accountant::AccountantError;
use vpmix::checkpoint::CheckpointError;
use vpmix::data::DataError;
use vpmix::trainer::TrainError;

/// Failure of a command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: flags, configuration, schemas, data files, checkpoints.
    #[error("{0}")]
    Validation(String),
    /// The inputs were fine but the job failed.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn validation(m: impl std::fmt::Display) -> Self {
        CliError::Validation(m.to_string())
    }

    pub fn runtime(m: impl std::fmt::Display) -> Self {
        CliError::Runtime(m.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<AccountantError> for CliError {
    fn from(e: AccountantError) -> Self {
        match e {
            AccountantError::Infeasible => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::Model(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
