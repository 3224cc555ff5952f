use std::io;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("plan error: {0}")]
    Plan(String),

    #[error("ratings data: {0}")]
    Data(String),

    /// The same (user, item) pair appears twice across train and test.
    #[error("conflicting ratings for user {user}, item {item}")]
    Conflict { user: String, item: String },

    #[error(transparent)]
    Core(#[from] optspace::Error),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub(crate) fn plan(msg: impl Into<String>) -> Self {
        CliError::Plan(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }
}
