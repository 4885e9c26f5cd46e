use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time scale: {0}")]
    InvalidTimeScale(String),

    #[error("t = {0} is not a point of the time scale")]
    NotInTimeScale(f64),

    #[error("empty horizon [{t0}, {tf}]")]
    EmptyHorizon { t0: f64, tf: f64 },

    #[error("p = {p} is not regressive at t = {t} (1 + mu*p = 0 with mu = {mu})")]
    NotRegressive { p: f64, t: f64, mu: f64 },

    #[error("quadrature failed to reach tolerance on [{a}, {b}]")]
    QuadratureFailed { a: f64, b: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("activation inverse undefined for s = {s} (range is bounded by {bound})")]
    OutsideActivationRange { s: f64, bound: f64 },

    #[error("eigenvalue solver failed to converge")]
    EigenFailure,

    #[error("graininess {observed} exceeds the declared mu* = {declared}")]
    MuStarTooSmall { declared: f64, observed: f64 },

    #[error("integrator failure at t = {t}: {reason}")]
    IntegratorFailure { t: f64, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
