use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("weight {index} is not strictly positive ({value})")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("entry ({row}, {col}) = {value} lies outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("permutation is not an involution at state {state}")]
    NotInvolution { state: usize },
    #[error("map is not a bijection: state {state} is hit twice")]
    NotBijection { state: usize },
    #[error("flow map violates psi^-1 = xi o psi o xi at state {state}")]
    FlowNotTimeReversible { state: usize },
    #[error("involution does not preserve the distribution at state {state}")]
    InvolutionNotIsometric { state: usize },
    #[error("kernel does not leave the distribution invariant (max residual {residual:e})")]
    NotInvariant { residual: f64 },
    #[error("kernel is not reversible with respect to the distribution")]
    NotReversible,
    #[error("kernel is not (mu,Q)-reversible")]
    NotMuQReversible,
    #[error("discount factor {lambda} outside [0, 1)")]
    InvalidLambda { lambda: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("hypothesis not certified: {0}")]
    HypothesisNotCertified(String),
    #[error("singular linear system")]
    Singular,
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
