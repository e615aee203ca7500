use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph is disconnected")]
    Disconnected,

    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("invalid edge {{{0}, {1}}}")]
    InvalidEdge(usize, usize),

    #[error("adjacent nodes {0} and {1} are coincident")]
    Coincident(usize, usize),

    #[error("framework too small for the rigidity eigenvalue test: n = {n}, d = {d}")]
    FrameworkTooSmall { n: usize, d: usize },

    #[error("unsupported dimension {0}; expected 2 or 3")]
    UnsupportedDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("edge weight {weight} at index {index} is not positive")]
    NonPositiveWeight { index: usize, weight: f64 },

    #[error("rigidity lost in subframework centered at {center} (rho = {rho:e})")]
    RigidityLost { center: usize, rho: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("node {0} is not an anchor")]
    NotAnchor(usize),

    #[error("singular innovation covariance at node {0}")]
    SingularInnovation(usize),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
}
