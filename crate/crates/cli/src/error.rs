use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid arguments: {0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{stage} stage failed: {source}")]
    Stage { stage: &'static str, source: Box<CliError> },

    #[error(transparent)]
    Core(#[from] tempseg_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        CliError::Format { path: path.to_path_buf(), message: message.into() }
    }

    /// Process exit status: 2 for bad arguments, 3 for bad data, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use tempseg_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
            CliError::Stage { source, .. } => source.exit_code(),
            CliError::Core(e) => match e {
                E::Diverged { .. } | E::Numerical(_) => 4,
                E::TooLarge(_) => 2,
                E::InvalidArgument(_) | E::InvalidState(_) | E::UndefinedMetric(_) => 3,
            },
        }
    }
}

/// Tags errors of a pipeline stage with its name.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<CliError>> StageContext<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| CliError::Stage { stage, source: Box::new(e.into()) })
    }
}
