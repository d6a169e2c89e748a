use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Failure while reading or writing one of the supported file formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: u64, message: String },
}

impl FormatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        FormatError::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        FormatError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid arguments: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] nohub_core::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for invalid input parameters, 3 for runtime and numeric failures,
    /// 4 for file access and parse failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(e) => core_exit_code(e),
            CliError::Format(_) => 4,
            CliError::Runtime(_) => 3,
        }
    }
}

fn core_exit_code(e: &nohub_core::Error) -> i32 {
    use nohub_core::Error::*;
    match e {
        InvalidParameter { .. } | DimTooLarge { .. } | PerplexityOutOfRange { .. } | BadK { .. } => 2,
        InsufficientPool(_) | Shape(_) => 2,
        EpisodeFailed { source, .. } => core_exit_code(source),
        _ => 3,
    }
}
