use thiserror::Error;

#[derive(Debug, Error)]
pub enum RhmError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// `m > v^(s-1)` leaves no unambiguity budget: `m*v` distinct right-hand
    /// sides cannot fit in the `v^s` available tuples with one parent each.
    #[error("infeasible: m = {m} exceeds v^(s-1) = {budget}")]
    Infeasible { m: usize, budget: usize },

    #[error("unambiguity violated at level {level}: tuple {tuple:?} produced twice")]
    Ambiguous { level: usize, tuple: Vec<u16> },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("enumeration budget exceeded: required {required}, budget {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("divergent quantity: {0}")]
    Divergent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RhmError>;
