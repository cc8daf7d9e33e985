use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid nonlinearity: {0}")]
    InvalidNonlinearity(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {dt} violates the stability limit {dt_max}")]
    CflViolation { dt: f64, dt_max: f64 },

    #[error("blow-up at t = {time}: sup-norm {sup} exceeds {threshold}")]
    BlowUp { time: f64, sup: f64, threshold: f64 },

    #[error("level-set bracketing failed: {0}")]
    Bracketing(String),

    #[error("resampling error {err:.3e} exceeds tolerance {tol:.3e}")]
    Resampling { err: f64, tol: f64 },

    #[error("self-similar profile did not converge: L1 gap {gap:.4} > {threshold}")]
    NonConvergence { gap: f64, threshold: f64 },

    #[error("no snapshot at t = {0}")]
    MissingSnapshot(f64),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
