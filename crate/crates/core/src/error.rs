use thiserror::Error;

/// Errors raised across the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unsupported dimension {0} (at most 4 supported)")]
    UnsupportedDimension(usize),

    #[error("Riccati iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("closed loop is not Hurwitz; the pair (A, B) is not stabilizable")]
    NotStabilizable,

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("QP constraint set is infeasible: {0}")]
    Infeasible(String),

    #[error("setpoint requested at t = {t} outside [0, {tf}]")]
    TimeOutOfRange { t: f64, tf: f64 },

    #[error("metrics unavailable: the run diverged")]
    MetricsUnavailable,

    #[error("nominal run is unstable; margin is undefined")]
    NominalUnstable,

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
