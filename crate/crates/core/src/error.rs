use thiserror::Error;

/// Errors raised by model constructors and solver routines.
#[derive(Debug, Error)]
pub enum RmdpError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{context}: vector must be a probability distribution (sum {sum}, min entry {min})")]
    NotADistribution {
        context: &'static str,
        sum: f64,
        min: f64,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("{context}: no convergence after {iters} iterations (residual {residual})")]
    Convergence {
        context: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("linear program: {0}")]
    LinearProgram(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, RmdpError>;
