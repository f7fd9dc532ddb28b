use std::path::PathBuf;

use corisk::pipeline::{BundleError, PipelineError};

/// Exit statuses of the `corisk` binary.
pub mod exit {
    pub const FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const BUNDLE: u8 = 3;
    pub const SCHEMA_DRIFT: u8 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot load bundle {}: {source}", path.display())]
    Bundle { path: PathBuf, source: BundleError },
    #[error("schema drift: {0}")]
    SchemaDrift(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Pipeline(PipelineError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Bundle { .. } => exit::BUNDLE,
            CliError::SchemaDrift(_) => exit::SCHEMA_DRIFT,
            _ => exit::FAILURE,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_schema_drift() {
            return CliError::SchemaDrift(match e {
                PipelineError::SchemaDrift(m) => m,
                other => other.to_string(),
            });
        }
        match e {
            PipelineError::Config(m) => CliError::Config(m),
            other => CliError::Pipeline(other),
        }
    }
}
