//! Experiment orchestration for the `regime` binary.
//!
//! Every command reads an [`ExperimentConfig`], writes its outputs under the
//! output directory, and maps failures onto exit codes: 1 for a failed
//! validation, 2 for a bad configuration, 3 for I/O trouble.

pub mod commands;
pub mod config;
pub mod protocol;

use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} validation check(s) failed")]
    ValidationFailed(usize),
    #[error(transparent)]
    Core(#[from] regime_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ValidationFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(regime_core::Error::Io { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
