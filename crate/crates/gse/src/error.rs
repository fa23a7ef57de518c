use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GseError {
    #[error(transparent)]
    Core(#[from] gse_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("training run {label}: {source}")]
    Run {
        label: String,
        #[source]
        source: Box<GseError>,
    },
}

pub type Result<T, E = GseError> = std::result::Result<T, E>;

impl GseError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn format(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.as_ref().to_path_buf(),
            message: message.into(),
        }
    }

    pub fn in_run(self, label: impl Into<String>) -> Self {
        Self::Run {
            label: label.into(),
            source: Box::new(self),
        }
    }

    /// Process exit status: 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(gse_core::Error::NonFinite(_)) => 3,
            Self::Usage(_) | Self::Config(_) => 1,
            Self::Run { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
