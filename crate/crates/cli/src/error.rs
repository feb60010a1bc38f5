//! CLI error type and the exit-code policy.

use thiserror::Error;

/// Anything the runner can fail with.  [`CliError::exit_code`] maps
/// configuration problems to exit 2 and numerical breakdowns to 3.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent configuration; the message names the field.
    #[error("config error: {0}")]
    Config(String),

    /// Failure bubbling up from the numerical library.
    #[error(transparent)]
    Core(#[from] eigenlab_core::Error),

    /// Filesystem trouble, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    /// A manifest references an artifact that no longer exists.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::MissingArtifact(_) => 2,
            CliError::Core(e) => {
                if e.is_validation() {
                    2
                } else {
                    3
                }
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Shorthand for filesystem errors carrying their path.
pub fn io_err(path: &std::path::Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}
