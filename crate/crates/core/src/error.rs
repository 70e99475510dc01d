use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension for {what}: {value}")]
    InvalidDimension { what: &'static str, value: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not symmetric: entry ({row}, {col}) differs from its transpose")]
    NotSymmetric { row: usize, col: usize },

    #[error("operator is not positive definite: pivot {index} is {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("numerical loss of definiteness: (Av, v) = {value:e} for ||v||^2 = {norm_sq:e}")]
    LossOfDefiniteness { value: f64, norm_sq: f64 },

    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),

    #[error("subspace index {index} out of range for {len} subspaces")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("enumeration of {paths} paths exceeds the budget of {budget}")]
    EnumerationTooLarge { paths: u128, budget: u128 },

    #[error("sweep does not converge: ||I - B A||_A^2 = {norm_sq}")]
    NonConvergentSweep { norm_sq: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate decomposition: {0}")]
    DegenerateDecomposition(String),

    #[error("at least 2 trials are needed for a variance estimate, got {0}")]
    TooFewTrials(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
