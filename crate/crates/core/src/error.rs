use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report. The CLI maps each variant family to
/// a process exit code (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage ordering error: stage {stage} requires stage {requires} to have run first")]
    Ordering { stage: String, requires: String },

    #[error("plot error: {0}")]
    Plot(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 2 config error, 3 data error, 4 ordering error, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 2,
            Error::Format(_)
            | Error::Data(_)
            | Error::Validation(_)
            | Error::Degenerate(_)
            | Error::Json(_)
            | Error::Image(_)
            | Error::Csv(_) => 3,
            Error::Ordering { .. } => 4,
            Error::Plot(_) | Error::Io { .. } => 1,
        }
    }
}
