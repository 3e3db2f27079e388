use std::io;
use std::path::{Path, PathBuf};

/// Errors surfaced by loaders, writers and pipeline commands.
///
/// Every variant maps onto a process exit code: unreadable or malformed
/// input is 2, violated cross-input contracts are 3, failed output is 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{context}: cannot read {}: {source}", path.display())]
    Read { context: String, path: PathBuf, source: io::Error },
    #[error("{context}: {message}")]
    Format { context: String, message: String },
    #[error("{0}")]
    Contract(String),
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format { context: context.into(), message: message.into() }
    }

    pub fn read(context: impl Into<String>, path: &Path, source: io::Error) -> Self {
        Error::Read { context: context.into(), path: path.to_path_buf(), source }
    }

    /// Attaches `context` to a core error, keeping its failure class.
    pub fn from_core(context: impl Into<String>, err: masktext_core::Error) -> Self {
        let context = context.into();
        match err {
            masktext_core::Error::Format(m) => Error::Format { context, message: m },
            masktext_core::Error::Contract(m) => Error::Contract(format!("{context}: {m}")),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Read { .. } | Error::Format { .. } => 2,
            Error::Contract(_) => 3,
            Error::Write { .. } => 1,
        }
    }
}

pub(crate) fn read_bytes(path: &Path, context: &str) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::read(context, path, e))
}

pub(crate) fn read_text(path: &Path, context: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::read(context, path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::Write { path: path.to_path_buf(), source: e })
}
