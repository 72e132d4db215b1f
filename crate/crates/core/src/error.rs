use thiserror::Error;

/// Errors raised by measure construction, sampling and the factor stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("alphabet mismatch: expected {expected} symbols, got {got}")]
    AlphabetMismatch { expected: usize, got: usize },

    #[error("operation requires a two-symbol alphabet, measure has {0} symbols")]
    NotBinary(usize),

    #[error("symbol {symbol} has zero mass at index {index}")]
    ZeroMass { index: i64, symbol: String },

    #[error("index ranges differ: {0}")]
    RangeMismatch(String),

    #[error("rejection budget of {attempts} attempts exceeded (acceptance rate {rate:.3e})")]
    BudgetExceeded { attempts: u64, rate: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        Error::Io(err.to_string())
    }
}
