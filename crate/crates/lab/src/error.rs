use std::path::{Path, PathBuf};

/// Errors surfaced by the lab crate and the CLI.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A file exists but does not follow its format.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] sot3d_core::Error),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        Self::Format { path: path.to_path_buf(), msg: msg.into() }
    }

    /// CLI exit status: 1 protocol violation, 2 format or IO error, 3 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(sot3d_core::Error::Protocol(_)) => 1,
            Self::Io { .. } | Self::Format { .. } => 2,
            _ => 3,
        }
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| LabError::io(path, e))
}

pub(crate) fn read_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}
