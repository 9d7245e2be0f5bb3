use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("intensity {rate} exceeds envelope {bound} for coordinate {coordinate} at time {time}")]
    EnvelopeViolation {
        coordinate: usize,
        time: f64,
        rate: f64,
        bound: f64,
    },
    #[error("non-finite gradient at {position:?}")]
    NonFiniteGradient { position: Vec<f64> },
    #[error("no envelope available for thinning coordinate {coordinate}")]
    MissingEnvelope { coordinate: usize },
    #[error("velocity must lie in {{-1, 1}}^d, got {0:?}")]
    InvalidVelocity(Vec<f64>),
    #[error("trajectory has {events} events, need at least 2")]
    DegenerateTrajectory { events: usize },
    #[error("quadrature disagrees between resolutions: {coarse} vs {fine}")]
    GridTooCoarse { coarse: f64, fine: f64 },
    #[error("dimension {found} exceeds the limit {limit}")]
    DimensionTooLarge { found: usize, limit: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Core(#[from] nonrev_core::Error),
    #[error(transparent)]
    Estimate(#[from] nonrev_mc::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
