use thiserror::Error;

/// Errors raised by the library. Every variant names the violated condition.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("cannot parse rational {0:?}: expected \"p/q\" or an integer")]
    ParseRational(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("{what} = {value} is outside {range}")]
    OutOfRange { what: &'static str, value: String, range: String },

    #[error("{what}: {got} exceeds the limit of {limit}")]
    GuardExceeded { what: &'static str, limit: usize, got: usize },

    #[error("degenerate case: {0}")]
    Degenerate(String),

    #[error("outside the formula's regime: {0}")]
    Regime(String),

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
