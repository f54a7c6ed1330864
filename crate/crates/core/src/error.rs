use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what}: argument {value} outside its domain")]
    Domain { what: &'static str, value: f64 },

    #[error("non-finite value from {what} at x={x}, t={t}")]
    NonFinite { what: &'static str, x: f64, t: f64 },

    #[error("zero volatility at step {step} ({what})")]
    ZeroVolatility { what: &'static str, step: usize },

    #[error("observation time {time} is not a node of the level-{level} grid")]
    Misaligned { time: f64, level: u32 },

    #[error("non-finite sample at level {level}, sample {sample}: {source}")]
    InvalidSample {
        level: u32,
        sample: u64,
        #[source]
        source: Box<Error>,
    },
}
