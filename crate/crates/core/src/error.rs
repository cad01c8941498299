use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("instance has no items")]
    EmptyInstance,
    #[error("total profit of the instance is zero")]
    ZeroTotalProfit,
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("item {index} has zero weight")]
    ZeroWeight { index: usize },
    #[error("item {index} has weight {weight} exceeding capacity {capacity}")]
    WeightExceedsCapacity { index: usize, weight: u64, capacity: u64 },
    #[error("instance totals overflow 64-bit integers")]
    Overflow,
    #[error("item index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("probe budget of {budget} exhausted")]
    BudgetExceeded { budget: u64 },
    #[error("instance is feasibility-only and cannot be sampled by profit")]
    NotSampleable,
    #[error("epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(String),
    #[error("could not parse rational number {0:?}")]
    ParseRational(String),
    #[error("quantile level must lie in (0, 1), got {0}")]
    InvalidQuantileLevel(f64),
    #[error("sample of size {have} is below the required {need}")]
    InsufficientSample { have: u64, need: u64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("efficiency thresholds must be non-increasing")]
    NonMonotoneSequence,
    #[error("brute force supports at most {max} items, got {n}")]
    InstanceTooLarge { n: usize, max: usize },
    #[error("dynamic program needs {cells} cells, budget is {budget}")]
    DpBudgetExceeded { cells: u128, budget: u128 },
    #[error("invalid hard-instance spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
