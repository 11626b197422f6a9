use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("packing failed: placed {placed} of {requested} positions (min_dist {min_dist})")]
    Packing {
        placed: usize,
        requested: usize,
        min_dist: f64,
    },

    #[error("control points {0} and {1} coincide")]
    CoincidentPoints(usize, usize),

    #[error("degenerate spline configuration: {0}")]
    Degenerate(String),

    #[error("singular covariance for profile {0}")]
    SingularCovariance(usize),

    #[error("unknown preset `{name}` (available: {available})")]
    UnknownPreset { name: String, available: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid flow file: {0}")]
    Flow(String),

    #[error("frame count mismatch: ground truth has {gt}, prediction has {pred}")]
    FrameCountMismatch { gt: usize, pred: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
