use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid elastic parameter alpha = {0}: strong ellipticity requires alpha > -1")]
    InvalidParameter(f64),

    #[error("singular point: the fundamental matrix has its pole here")]
    SingularPoint,

    #[error("integrand does not vanish at the outer radius (|g| = {0:e})")]
    NonCompactSupport(f64),

    #[error("alpha = {alpha} lies outside the domain of {what}")]
    DomainError { what: &'static str, alpha: f64 },

    #[error("no sign change found while bracketing {0}")]
    BracketFailure(&'static str),

    #[error("solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("resolution exceeded: {0}")]
    ResolutionExceeded(String),

    #[error("at least {needed} dyadic levels are required, got {got}")]
    InsufficientLevels { needed: usize, got: usize },

    #[error("residual {residual:e} exceeds tolerance {tolerance:e}")]
    ToleranceExceeded { residual: f64, tolerance: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
