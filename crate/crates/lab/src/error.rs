use std::path::PathBuf;

/// Errors surfaced by the lab; [`LabError::exit_code`] maps them onto the
/// CLI contract (2 for bad input, 1 for runtime failures).
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("checkpoint does not match the task: {0}")]
    Mismatch(String),
    #[error("training failed: {0}")]
    Training(resonance_core::Error),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Mismatch(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
        let path = path.into();
        move |source| LabError::Io { path, source }
    }
}

/// Core errors raised while building a task or validating settings are
/// config problems; anything else happened during training.
pub(crate) fn config_error(e: resonance_core::Error) -> LabError {
    LabError::Config(e.to_string())
}

pub type Result<T> = std::result::Result<T, LabError>;
