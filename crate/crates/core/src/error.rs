use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument was NaN, infinite, or otherwise unusable.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A finite argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An angle or parameter outside the range where the model is valid.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// A table lookup key outside the tabulated range (no extrapolation).
    #[error("lookup key out of range: {0}")]
    Range(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The input series is too short for the requested estimator.
    #[error("series too short: need at least {needed} samples, got {got}")]
    Length { needed: usize, got: usize },

    /// Estimator input that would produce a meaningless result (e.g. zero noise floor).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("slope table: {0}")]
    Table(String),
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite, got {value}")))
    }
}
