use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ray misses the scene bounds (closest approach {distance:.6} > radius {radius:.6})")]
    RayMissesScene { distance: f64, radius: f64 },

    #[error("ray origin lies inside the scene bounds sphere")]
    OriginInsideBounds,

    #[error("invalid count {count}: {reason}")]
    InvalidCount { count: usize, reason: &'static str },

    #[error("negative density {value} at sample {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("weight distribution has zero total mass")]
    DegenerateDistribution,

    #[error("source weight distribution is empty")]
    EmptySource,

    #[error("depth {depth} outside [{near}, {far}]")]
    DepthOutOfRange { depth: f64, near: f64, far: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("image dimensions differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("png: {0}")]
    Png(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
