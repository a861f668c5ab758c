//! Crate-wide error type.

/// Errors for chain construction, solvers, schedules, and the harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("row {row} sums to {sum:.17}, not 1")]
    NotStochastic { row: usize, sum: f64 },

    #[error("entry ({row}, {col}) is {value}, outside [0, 1]")]
    ProbabilityOutOfRange { row: usize, col: usize, value: f64 },

    #[error("chain is not ergodic: {0}")]
    NonErgodic(String),

    #[error("linear system is singular")]
    SingularSystem,

    #[error("mixing time at precision {alpha} exceeded cap {cap}")]
    MixingTimeout { cap: usize, alpha: f64 },

    #[error("no admissible step size on the search grid")]
    NoAdmissibleStep,

    #[error("no admissible round index found below cap {cap}")]
    NotFoundWithinCap { cap: usize },

    #[error("window underflow: round {k} < window length {tau}")]
    WindowUnderflow { k: usize, tau: usize },

    #[error("step size {alpha} is inadmissible (decay factor would be non-positive)")]
    InadmissibleStep { alpha: f64 },

    #[error("iterates diverged (non-finite value) at round {round}")]
    Diverged { round: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("assumption failed: {0}")]
    AssumptionFailed(String),

    #[error("generation failed: {0}")]
    GenerationFailed(String),

    #[error("mse at index {index} is not positive; log-log fit undefined")]
    NonPositiveMse { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error to: 2 for configuration or
    /// I/O problems, 1 for everything that means a run or check failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Json(_) | Error::Parse(_) | Error::InvalidParameter(_) => 2,
            _ => 1,
        }
    }
}
