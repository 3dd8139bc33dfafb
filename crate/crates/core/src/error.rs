use std::path::{Path, PathBuf};

use crate::collect::CollectError;
use crate::distill::DistillError;
use crate::env::EnvError;
use crate::optimize::OptimizeError;
use crate::plan::ParseError;
use crate::policy::PolicyError;
use crate::reward::RewardError;

/// Top-level error for I/O-bearing operations (harness, persistence, CLI).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Plan(#[from] ParseError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Collect(#[from] CollectError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error("missing expert data: {0}")]
    MissingExpertData(String),
    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
