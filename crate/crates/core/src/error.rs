use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("training diverged: {term} became non-finite at epoch {epoch}")]
    Diverged { term: &'static str, epoch: usize },

    #[error("query already classified as target (score {score:.4} >= {boundary})")]
    QueryAlreadyTarget { score: f64, boundary: f64 },

    #[error("column {column:?}: unseen category {value:?}")]
    UnseenCategory { column: String, value: String },

    #[error("column {column:?}: {detail}")]
    Schema { column: String, detail: String },

    #[error("cannot parse {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("corrupt file {path}: {detail}")]
    Corrupt { path: PathBuf, detail: String },

    #[error("unsupported archive format version {found} (this build reads up to {supported})")]
    Version { found: u32, supported: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// a runtime or numeric failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Io { .. }
                | Error::Parse { .. }
                | Error::Schema { .. }
                | Error::Corrupt { .. }
                | Error::Version { .. }
        )
    }
}
