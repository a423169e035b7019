//! Experiment configuration, execution, archives and CSV export.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod archive;
pub mod config;
pub mod export;
pub mod runner;

pub use config::ConfigError;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {message}", path.display())]
    Json { path: PathBuf, message: String },

    #[error("missing artifact: {0}")]
    Missing(String),
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }
}
