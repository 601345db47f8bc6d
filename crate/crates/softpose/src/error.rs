use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failures reading or writing the interchange formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{}: {err}", path.display())]
    Io { path: PathBuf, err: std::io::Error },
    #[error("{}: {inner}", path.display())]
    InFile { path: PathBuf, inner: Box<FormatError> },
    #[error(transparent)]
    PngDecode(#[from] png::DecodingError),
    #[error(transparent)]
    PngEncode(#[from] png::EncodingError),
    #[error("unsupported png layout: {0}")]
    PngLayout(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] softpose_core::Error),
}

impl FormatError {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        FormatError::Parse { line, msg: msg.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io { path: path.to_path_buf(), err: source }
    }

    pub fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (FormatError::Io { .. } | FormatError::InFile { .. }) => e,
            e => FormatError::InFile { path: path.to_path_buf(), inner: Box::new(e) },
        }
    }

    /// Line number of a parse error, looking through file context.
    pub fn line(&self) -> Option<usize> {
        match self {
            FormatError::Parse { line, .. } => Some(*line),
            FormatError::InFile { inner, .. } => inner.line(),
            _ => None,
        }
    }
}

/// Configuration problems detected before any computation starts.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {}: {err}", path.display())]
    Syntax { path: PathBuf, err: serde_json::Error },
    #[error("config: mesh file not found: {}", .0.display())]
    MissingMesh(PathBuf),
    #[error("config: symmetry file not found: {}", .0.display())]
    MissingSymmetry(PathBuf),
    #[error("config: {0}")]
    Invalid(String),
}
