use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable file {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("zero-dimension image")]
    ZeroDimension,
    #[error("empty mask")]
    EmptyMask,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("point ({x}, {y}) outside image")]
    PointOutside { x: f64, y: f64 },
    #[error("candidate centroid ({x:.2}, {y:.2}) outside field of view")]
    CentroidOutsideMask { x: f64, y: f64 },
    #[error("need at least two rows to normalize features")]
    TooFewRows,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("empty training data")]
    EmptyData,
    #[error("no annotations in ground truth")]
    NoAnnotations,
    #[error("image-level AUC needs both positive and negative images")]
    SingleLabel,
    #[error("fewer images ({images}) than folds ({folds})")]
    TooFewImages { images: usize, folds: usize },
    #[error("malformed model file: {0}")]
    Model(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("unknown {kind} `{name}`; expected one of: {options}")]
    Unknown { kind: &'static str, name: String, options: String },
    #[error("dataset layout: {0}")]
    Layout(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}

/// Attaches the name of the pipeline stage that failed.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            Error::Stage { .. } => e,
            other => Error::Stage { stage, source: Box::new(other) },
        })
    }
}

impl Error {
    /// The innermost error, past any stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
