use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("negative entry {value} at {location}")]
    NegativeEntry { location: String, value: f64 },

    #[error("alpha {alpha} outside the supergradient interval [{lower}, {upper}] at n = {n}")]
    InvalidAlpha {
        n: u64,
        alpha: f64,
        lower: f64,
        upper: f64,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("network has a negative-cost residual cycle")]
    NegativeCycle,

    #[error("enumeration budget of {0} configurations exceeded")]
    BudgetExceeded(u64),

    #[error("time limit exceeded")]
    TimeLimit,

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
