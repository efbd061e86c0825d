use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid arm model: {0}")]
    InvalidArm(String),
    #[error("operation requires a {expected}-link arm, got {got} links")]
    WrongDof { expected: usize, got: usize },
    #[error("point ({x}, {y}) lies outside the contact grid")]
    OutOfGrid { x: f64, y: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite training loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("start configuration is infeasible: barrier {barrier} <= margin + r_min {threshold}")]
    StartInfeasible { barrier: f64, threshold: f64 },
    #[error("trajectory optimization failed: {0}")]
    Trajectory(String),
    #[error("requested {requested} samples but only {available} candidates exist")]
    TooManySamples { requested: usize, available: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
