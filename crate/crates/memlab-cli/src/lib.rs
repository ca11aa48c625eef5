//! Library surface of the `memlab` command-line tool, exposed so
//! integration tests drive the exact command implementations.

pub mod commands;
pub mod config;

/// Command failures, classified for the exit-code contract:
/// 0 success, 2 configuration, 3 runtime-unrecoverable.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}
