use std::path::PathBuf;

use hetrain::HeError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    He(#[from] HeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error("label cardinality mismatch: {0}")]
    Labels(String),
    #[error("invalid config: {0}")]
    Config(String),
    /// Insecure parameters without explicit consent.
    #[error("refusing insecure parameters: {0}")]
    Insecure(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn io_at(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
