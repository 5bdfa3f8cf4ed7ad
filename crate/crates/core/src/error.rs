use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("policy chain is not irreducible: {closed_classes} closed communicating classes")]
    NotIrreducible { closed_classes: usize },

    #[error("linear system is numerically singular: {0}")]
    SingularSystem(&'static str),

    #[error("matrix A is numerically singular; negative definiteness is violated")]
    SingularA,

    #[error("chain does not mix within {horizon} steps (d_TV stays at {d_tv:.3e}); it is periodic or reducible")]
    PeriodicChain { horizon: usize, d_tv: f64 },

    #[error("enumeration needs {policies} deterministic policies, budget is {budget}")]
    BudgetExceeded { policies: f64, budget: usize },

    #[error("infeasible feature dimension: {0}")]
    InfeasibleDimension(String),

    #[error("feature matrix is rank deficient (rank {rank} < dim {dim})")]
    RankDeficient { rank: usize, dim: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("oracle failure at step {step}: {source}")]
    OracleAt {
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Input/parse problems as opposed to numerical or validation failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Csv(_) | Error::Parse(_) | Error::InvariantViolation(_) | Error::InvalidSpec(_)
        )
    }
}
