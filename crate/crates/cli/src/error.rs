use std::path::PathBuf;
use std::process::ExitCode;

use vaxmedia::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Core(#[from] vaxmedia::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => 1,
                ErrorKind::Precondition => 2,
                ErrorKind::Convergence => 3,
            },
        })
    }
}

pub type CliResult<T> = Result<T, CliError>;
