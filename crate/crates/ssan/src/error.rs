use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error("gradient check failed: {0}")]
    GradientCheck(String),
    #[error(transparent)]
    Core(#[from] ssan_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 input/output, 2 usage, 3 protocol violation.
    pub fn exit_code(&self) -> u8 {
        use ssan_core::Error as E;
        match self {
            Self::Io { .. } | Self::Parse { .. } | Self::Format { .. } | Self::GradientCheck(_) => 1,
            Self::Usage(_) | Self::Core(E::Parameter(_)) => 2,
            Self::Core(_) => 3,
        }
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
