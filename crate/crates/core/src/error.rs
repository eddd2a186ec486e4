use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {value} (point {point}, dim {dim}) is outside [0, 1]")]
    CoordinateOutOfRange { point: usize, dim: usize, value: f64 },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A tape was handed to backward with parameters it was not recorded for.
    #[error("tape does not belong to these parameters: {0}")]
    StaleTape(String),

    /// Training produced a non-finite loss or gradient.
    #[error("optimizer aborted at iteration {iteration}: non-finite {what}")]
    NonFinite { what: String, iteration: u64 },

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("k-space sample {index} at ({kx}, {ky}) lies outside the band [-{limit}, {limit}]")]
    OutOfBand { index: usize, kx: f64, ky: f64, limit: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }
}
