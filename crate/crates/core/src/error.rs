use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {x} lies outside the domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("jacobian is singular at x = {x} (J = {value:e})")]
    SingularJacobian { x: f64, value: f64 },

    #[error("value {y} is not in the image of the domain [{lo}, {hi}]")]
    NotInImage { y: f64, lo: f64, hi: f64 },

    #[error("map is not monotone: jacobian changes sign near x = {x}")]
    NonMonotone { x: f64 },

    #[error("X(x) - x vanishes identically on the domain; fixed points are not isolated")]
    DegenerateMap,

    #[error("orbit left the domain at step {step} (x = {x})")]
    OrbitEscaped { step: usize, x: f64 },

    #[error("basis index {index} outside 1..={n}")]
    Index { index: usize, n: usize },

    #[error("operation requires a {expected} basis")]
    Kind { expected: &'static str },

    #[error("adaptive quadrature exceeded {limit} sub-intervals on [{a}, {b}]")]
    Quadrature { a: f64, b: f64, limit: usize },

    #[error("matrix is not near identity: max |V - I| = {deviation} (limit {limit})")]
    NotNearIdentity { deviation: f64, limit: f64 },

    #[error("not enough zero rows to square the blocks: {deficit} rows short")]
    InsufficientZeroRows { deficit: usize },

    #[error("gaussian width {sigma} is below 3 cells ({min})")]
    Width { sigma: f64, min: f64 },

    #[error("propagator stage is {found}, expected {expected}")]
    Stage { found: String, expected: &'static str },

    #[error("no peaks above background in the measured distribution")]
    NoPeaks,

    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("failed to parse matrix dump: {0}")]
    Parse(String),
}
