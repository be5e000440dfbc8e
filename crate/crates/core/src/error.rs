use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("grid dimensions must be positive, got {height}x{width}x{channels}")]
    EmptyGrid {
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("data length {len} does not match {height}x{width}x{channels}")]
    DataLength {
        len: usize,
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("non-finite value in grid data")]
    NonFinite,
    #[error("map of {height}x{width} is smaller than the required {min}x{min}")]
    TooSmall {
        height: usize,
        width: usize,
        min: usize,
    },
    #[error("{what} = {value} is out of range [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("budget target must be positive, got {0}")]
    NonPositiveTarget(f64),
    #[error("budget solver did not converge after {steps} steps (residual {residual})")]
    NoConvergence { steps: usize, residual: f64 },
    #[error("layer {layer} is missing from a cache of {available} layers")]
    MissingLayer { layer: usize, available: usize },
}

impl Error {
    pub(crate) fn out_of_range(what: &'static str, value: usize, min: usize, max: usize) -> Self {
        Error::OutOfRange {
            what,
            value: value as i64,
            min: min as i64,
            max: max as i64,
        }
    }
}
