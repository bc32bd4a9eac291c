use std::path::{Path, PathBuf};

/// Failure of a command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    Insufficient(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("evaluation gates failed: {0}")]
    GateFailure(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, message: impl ToString) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    /// 1 I/O or parse, 2 too few tags or correspondences, 3 degenerate
    /// geometry, 4 evaluation gate failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::InvalidConfig(_) => 1,
            CliError::Insufficient(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::GateFailure(_) => 4,
        }
    }
}
