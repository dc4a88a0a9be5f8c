use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem instance: {0}")]
    InvalidInstance(String),

    #[error("dimension mismatch: {what} has {found} entries, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Every input to a capped-simplex solve was zero.
    #[error("no positive entries to normalize")]
    NoPositiveEntries,

    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),

    #[error("enumeration count {count} exceeds budget {budget}")]
    BudgetExceeded { count: u128, budget: u64 },

    #[error("result carries no trace")]
    NoTrace,

    #[error("linear program ended with status {0:?}")]
    LpFailed(crate::lp::LpStatus),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
