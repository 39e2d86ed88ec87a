use std::path::PathBuf;

/// Errors surfaced by the experiment front end.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(memstab_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl AppError {
    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for solver failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use memstab_core::Error as E;
        match self {
            AppError::Config(_) => 2,
            AppError::Core(E::InvalidParameter(_) | E::Misaligned(_) | E::DimensionMismatch { .. }) => 2,
            AppError::Core(_) => 3,
            _ => 1,
        }
    }
}

impl From<memstab_core::Error> for AppError {
    fn from(e: memstab_core::Error) -> Self {
        AppError::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, AppError>;
