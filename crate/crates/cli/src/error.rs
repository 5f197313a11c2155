use std::path::Path;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sparse_node::Error),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("missing files in {dir}: {missing}")]
    MissingFiles { dir: String, missing: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("suite {suite} failed: {detail}")]
    SuiteFailed { suite: String, detail: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1 validation, 2 numerical failure, 3 property-suite failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(
                sparse_node::Error::Divergence { .. } | sparse_node::Error::TrainingDiverged { .. },
            ) => 2,
            CliError::SuiteFailed { .. } => 3,
            _ => 1,
        }
    }
}
