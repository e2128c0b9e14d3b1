//! Error type shared by the geometry and dynamics layers.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Dimension mismatch between an input and the model's declared sizes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input outside the declared domain of a map (chart radius, section
    /// domain, missing point validity).
    #[error("domain violation: {0}")]
    Domain(String),

    /// A matrix that the construction requires to be invertible is singular
    /// at this point (degenerate orbit, gauge not transverse, ...).
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    /// An iterative solve (gauge-alignment Newton) did not converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Adaptive step-size underflow while integrating.
    #[error("stiffness: step size underflow at t = {0}")]
    Stiffness(f64),

    /// Malformed configuration input.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed trajectory file.
    #[error("parse error: {0}")]
    Parse(String),

    /// A verification run found residuals above tolerance.
    #[error("verification failed: {0}")]
    CheckFailed(String),
}

impl CoreError {
    pub fn shape(msg: impl Into<String>) -> Self {
        CoreError::Shape(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        CoreError::Domain(msg.into())
    }
    pub fn degenerate(msg: impl Into<String>) -> Self {
        CoreError::Degenerate(msg.into())
    }
}
