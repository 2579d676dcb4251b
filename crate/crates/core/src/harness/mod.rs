//! Configuration, file formats and the multi-epoch benchmark.

pub mod baseline;
pub mod config;
pub mod experiment;
pub mod io;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cleaning::CleanError;
use crate::datagen::DatagenError;
use crate::surrogate::SurrogateError;

pub use baseline::baseline_plan;
pub use config::{derive_seed, ExperimentConfig, FlatConfig};
pub use experiment::{run_experiment, steering_error, MetricsReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("format: {0}")]
    Format(String),
    #[error("io: {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Clean(#[from] CleanError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short stable identifier for machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Format(_) => "format",
            Self::Io { .. } => "io",
            Self::Datagen(_) => "datagen",
            Self::Clean(_) => "clean",
            Self::Surrogate(_) => "surrogate",
        }
    }
}
