use thiserror::Error;

/// Errors raised by the numerical engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid quiver: {0}")]
    InvalidQuiver(String),

    #[error("group element block {vertex} is not invertible (condition number {condition:e})")]
    NonInvertibleGroupElement { vertex: usize, condition: f64 },

    #[error("word is not a closed composable cycle: {0}")]
    InvalidCycle(String),

    #[error("relation is not composable: {0}")]
    InvalidRelation(String),

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("level {level} not reached: flow converged at critical value {critical_value}")]
    LevelNotReached { level: f64, critical_value: f64 },

    #[error("level {level} not reached: {reason}")]
    LevelNotReachedOther { level: f64, reason: String },

    #[error("critical refinement failed after {iterations} iterations (best residual {best_residual:e})")]
    RefinementFailed { iterations: usize, best_residual: f64 },

    #[error("insufficient data for fit: {available} usable samples, need {required}")]
    InsufficientData { available: usize, required: usize },

    #[error("point outside the domain of sigma: {0}")]
    UndefinedDomain(String),

    #[error("projection onto the subvariety failed (best residual {best_residual:e})")]
    ProjectionFailed { best_residual: f64 },

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
