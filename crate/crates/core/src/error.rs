use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for {what} of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("triangle {triangle} is degenerate (signed area {area:.3e})")]
    DegenerateTriangle { triangle: usize, area: f64 },

    #[error("non-positive conductivity: element mean {mean:.6e} on triangle {triangle}")]
    NonPositiveConductivity { triangle: usize, mean: f64 },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:.3e})")]
    CgNoConvergence { iterations: usize, residual: f64 },

    #[error("Newton iteration stalled after {iterations} iterations (residual norm {residual:.3e})")]
    NewtonNoConvergence { iterations: usize, residual: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("objective returned a non-finite value at the current iterate")]
    NonFiniteObjective,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
