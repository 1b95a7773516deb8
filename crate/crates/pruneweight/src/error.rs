use std::path::{Path, PathBuf};

use pruneweight_core::Error as CoreError;

/// Problems with a binary artifact's bytes.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("file is empty")]
    Empty,
    #[error("bad magic (expected {expected})")]
    BadMagic { expected: String },
    #[error("format version {found} is not supported (expected {supported})")]
    Version { found: u32, supported: u32 },
    #[error("truncated: needed {needed} more bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const VERSION: i32 = 4;
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self::Data(msg.into())
    }

    /// A missing input is a configuration problem; other IO failures are
    /// data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => exit::CONFIG,
            Self::Data(_) => exit::DATA,
            Self::Format {
                source: FormatError::Version { .. },
                ..
            } => exit::VERSION,
            Self::Format { .. } => exit::DATA,
            Self::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => exit::CONFIG,
            Self::Io { .. } => exit::DATA,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
