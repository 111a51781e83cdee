use std::path::PathBuf;

use thiserror::Error;

use crate::simcore::DeadlockReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("fault injection failed for seed {seed}: {reason}")]
    FaultInjection { seed: u64, reason: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("trace error at line {line}: {msg}")]
    Trace { line: usize, msg: String },

    #[error("deadlock detected: {0}")]
    Deadlock(Box<DeadlockReport>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
