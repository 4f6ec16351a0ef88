use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = DapError> = std::result::Result<T, E>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum DapError {
    #[error("invalid box ({x}, {y}, {w}, {h}): width and height must be positive and finite")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },

    #[error("input size mismatch: expected {expected:?}, got {actual:?}")]
    SizeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("spatial mismatch: input {index} is {actual:?}, expected {expected:?}")]
    SpatialMismatch {
        index: usize,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("channel mismatch: input {index} has {actual} channels, weights expect {expected}")]
    ChannelMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },

    #[error("cannot pool {from:?} up to {to:?}")]
    Upsample {
        from: (usize, usize),
        to: (usize, usize),
    },

    #[error("all channel scores are non-positive; selection would be arbitrary")]
    DegenerateScores,

    #[error("unknown domain branch {domain} (model has {branches})")]
    UnknownDomain { domain: usize, branches: usize },

    #[error("sampling exhausted after {proposals} proposals ({found_pos} positives, {found_neg} negatives found)")]
    SamplingExhausted {
        proposals: usize,
        found_pos: usize,
        found_neg: usize,
    },

    #[error("box {0:?} does not overlap the image")]
    OutOfImage([f64; 4]),

    #[error("non-finite loss at iteration {iteration} (domain {domain})")]
    NonFiniteLoss { iteration: usize, domain: usize },

    #[error("length mismatch: {left} results vs {right} ground-truth boxes")]
    LengthMismatch { left: usize, right: usize },

    #[error("count mismatch in {what}: {left} vs {right}")]
    CountMismatch {
        what: String,
        left: usize,
        right: usize,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown attribute tag {0:?}")]
    UnknownAttribute(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Image { path: PathBuf, message: String },
}

impl DapError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DapError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        DapError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
