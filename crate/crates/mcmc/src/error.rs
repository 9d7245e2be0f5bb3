use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("chain of length {len} is shorter than {required} (10 x max lag)")]
    ChainTooShort { len: usize, required: usize },
    #[error("{found} replicates supplied, at least {required} required")]
    TooFewReplicates { found: usize, required: usize },
    #[error("discount factor {lambda} outside [0, 1)")]
    InvalidLambda { lambda: f64 },
    #[error("non-finite component in phase state")]
    NonFiniteState,
    #[error("gradient disagrees with finite differences (relative error {error:e})")]
    GradientMismatch { error: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Core(#[from] nonrev_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
