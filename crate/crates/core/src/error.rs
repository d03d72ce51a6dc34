use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The chain has a transient or absorbing region and no unique
    /// stationary distribution.
    #[error("reducible chain: {0}")]
    Reducible(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A deviation bound was asked for without one of its required inputs.
    #[error("missing bound parameter: {0}")]
    MissingParameter(&'static str),

    #[error("distribution not normalized: mass off by {deficit:e}")]
    NotNormalized { deficit: f64 },

    /// The uniformization series did not reach its tail tolerance within
    /// the configured term cap.
    #[error("uniformization series cap exceeded ({cap} terms)")]
    SeriesCapExceeded { cap: usize },

    /// A Monte Carlo run was refused because the truncated state space
    /// leaks too much mass at the requested start state and horizon.
    #[error("truncation tail mass {mass:e} exceeds guard {guard:e}")]
    TailMassGuard { mass: f64, guard: f64 },

    #[error("invalid curvature certificate: {0}")]
    InvalidCertificate(String),

    #[error("root bracketing failed: {0}")]
    BracketFailure(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
}
