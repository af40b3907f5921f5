use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("no usable rows in {}", .0.display())]
    NoUsableRows(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Model(#[from] vmpost_core::Error),
}
