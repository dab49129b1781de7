use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular linear system")]
    Singular,

    #[error("optimal policy set has {count} members, above the enumeration cap {cap}")]
    EnumerationOverflow { count: u128, cap: usize },

    #[error("sample budget exhausted: {requested} draws requested, {available} available")]
    BudgetExhausted { requested: u64, available: u64 },

    #[error("sample size {n} admits no epoch schedule; the smallest feasible budget is {min_feasible}")]
    ScheduleInfeasible { n: u64, min_feasible: u64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Runtime,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Dimension { .. }
            | Error::InvalidMdp(_)
            | Error::InvalidArgument(_)
            | Error::Precondition(_)
            | Error::Degenerate(_)
            | Error::EnumerationOverflow { .. }
            | Error::Json(_)
            | Error::Csv(_) => ErrorKind::Validation,
            Error::NonConvergence { .. }
            | Error::Singular
            | Error::BudgetExhausted { .. }
            | Error::ScheduleInfeasible { .. }
            | Error::Io(_) => ErrorKind::Runtime,
        }
    }

    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
