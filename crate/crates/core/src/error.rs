use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimators, generators and I/O layers.
#[derive(Debug, Error)]
pub enum KarError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate bandwidth: all points are identical")]
    DegenerateBandwidth,

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("column '{column}' not present in header of {}", path.display())]
    MissingColumn { path: PathBuf, column: String },

    #[error("no usable rows remain in {} ({dropped} dropped)", path.display())]
    NoRows { path: PathBuf, dropped: usize },

    #[error("malformed {what} at {location}: {message}")]
    Parse {
        what: &'static str,
        location: String,
        message: String,
    },

    #[error("I/O failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("campaign failed: {failed} of {attempted} fits failed (limit {limit_pct}%)")]
    CampaignFailed {
        failed: usize,
        attempted: usize,
        limit_pct: u32,
    },
}

pub type Result<T> = std::result::Result<T, KarError>;

impl KarError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        KarError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KarError::Io {
            path: path.into(),
            source,
        }
    }
}
