use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CcsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parity profile: {0}")]
    InvalidProfile(String),

    #[error("stage {stage} out of range 1..={max}")]
    StageOutOfRange { stage: usize, max: usize },

    #[error("list size K={k} is smaller than the {d} distinct users required by the pattern")]
    InfeasibleListSize { k: u64, d: usize },

    #[error("probability {name}={value} outside [0, 1]")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("sensing matrix with 2^{j} columns and {rows} rows exceeds the memory budget of {budget} entries")]
    MatrixTooLarge { j: u32, rows: usize, budget: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix file: {0}")]
    MatrixFile(String),

    #[error("infeasible: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, CcsError>;
