use std::path::PathBuf;

use cassi_core::CoreError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const DIMENSION: i32 = 4;
    pub const DIVERGENCE: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("refusing to overwrite {0} (pass --force)")]
    Exists(PathBuf),
    #[error("cannot parse {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("replay mismatch: {0}")]
    Replay(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn parse(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        CliError::Parse {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Exists(_) => exit::USAGE,
            CliError::Parse { .. } | CliError::Read { .. } => exit::PARSE,
            CliError::Write { .. } | CliError::Replay(_) => exit::FAILURE,
            CliError::Core(e) => match e {
                CoreError::DimensionMismatch(_) => exit::DIMENSION,
                CoreError::Diverged(_) | CoreError::NonFinite(_) => exit::DIVERGENCE,
                _ => exit::USAGE,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
