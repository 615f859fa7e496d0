use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("file is empty: {}", .0.display())]
    EmptyFile(PathBuf),
    #[error("file is not valid UTF-8: {}", .0.display())]
    InvalidUtf8(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training failed at epoch {epoch}, segment {segment}: {source}")]
    Training {
        epoch: usize,
        segment: usize,
        #[source]
        source: elstm_core::Error,
    },
    #[error(transparent)]
    Core(#[from] elstm_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for numeric or runtime failures during a run,
    /// 1 for everything the caller could have fixed.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Training { .. } => 2,
            LabError::Core(elstm_core::Error::Numeric(_) | elstm_core::Error::NonFinite(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
