use std::path::{Path, PathBuf};

/// Failures of the file and command layer. Each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] ufc_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    /// A file exists but its contents are not what the format requires.
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// 2 for bad configuration, 3 for numerical failure, 4 for I/O and
    /// unreadable files.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Core(e) if e.is_numerical() => 3,
            Error::Core(ufc_core::Error::IncompatibleModel(_)) => 4,
            Error::Core(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 4,
        }
    }
}
