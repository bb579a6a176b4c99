use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("penalty parameter must be positive, got {0}")]
    NonPositiveGamma(f64),

    #[error("gamma {gamma} does not exceed 2M/eta = {threshold}")]
    GammaTooSmall { gamma: f64, threshold: f64 },

    #[error("point is not in the sweeping set (max psi = {psi_max:e})")]
    NotInSet { psi_max: f64 },

    #[error("initial point lies outside the sweeping set (max psi = {psi_max:e})")]
    InitialPointOutsideC { psi_max: f64 },

    #[error("active gradients are degenerate; no tangent-cone projection found")]
    DegenerateGradients,

    #[error("inward direction vanishes (norm {norm:e}); problem data violate the constraint qualification")]
    ZeroInwardDirection { norm: f64 },

    #[error("control coordinate {index} = {value} outside [{lo}, {hi}]")]
    ControlOutOfBox {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("state became non-finite at t = {time}; last finite state {last_state:?}")]
    NonFiniteState { time: f64, last_state: Vec<f64> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown problem `{key}`; available: {available}")]
    UnknownProblem { key: String, available: String },
}
