use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the spotting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected_width}x{expected_height}, found {found_width}x{found_height}")]
    DimensionMismatch { expected_width: usize, expected_height: usize, found_width: usize, found_height: usize },
    #[error("frame {width}x{height} is smaller than the minimum {min}x{min}")]
    FrameTooSmall { width: usize, height: usize, min: usize },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),
    #[error("invalid interval [{onset}, {offset}]")]
    InvalidInterval { onset: usize, offset: usize },
    #[error("interval [{onset}, {offset}] lies outside a sequence of {length} frames")]
    IntervalOutOfRange { onset: usize, offset: usize, length: usize },
    #[error("sequence of length {length} is too short, need at least {required}")]
    SequenceTooShort { length: usize, required: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient in {layer} at index {index}")]
    NonFiniteGradient { layer: &'static str, index: usize },
    #[error("training diverged in epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },
    #[error("empty training set")]
    EmptyDataset,
    #[error("video {video}: {features} feature frames but {labels} labels")]
    Misaligned { video: String, features: usize, labels: usize },
    #[error("leave-one-subject-out needs at least 2 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("format error: {0}")]
    Format(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("image error at {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
