use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument or law parameter is outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    /// The hypercube chain has a closed class with no exit mass.
    #[error("degenerate environment: {0}")]
    DegenerateEnvironment(String),

    /// A discovery policy read a site outside the revealed prefix.
    #[error("measurability violation: policy read site {site} outside the discovered prefix")]
    MeasurabilityViolation { site: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Hill estimation on a sample whose top order statistics coincide.
    #[error("sample has no tail: the {k} largest order statistics are equal")]
    NoTail { k: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
