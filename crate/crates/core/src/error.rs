use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),

    #[error("root search overflow: no sign change of the mechanism below {cap}")]
    RootSearchOverflow { cap: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("divergent Picard map: damping exhausted at omega = {omega} (update {update:e})")]
    DivergentPicard { omega: f64, update: f64 },

    #[error("{failed} of {total} curve cells failed; first: {first}")]
    CurveFailures { failed: usize, total: usize, first: String },

    #[error("integration error: {0}")]
    Integration(String),

    #[error("step budget exhausted after {completed} of {requested} paths")]
    StepBudget { completed: usize, requested: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
