use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A point was evaluated outside the domain of a map or branch.
    #[error("point {x} lies outside the domain {domain}")]
    Domain { x: f64, domain: &'static str },

    /// An iterative solver exhausted its iteration budget.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { what: &'static str, iterations: usize, residual: f64 },

    /// Invalid map parameters or probability vector.
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    /// Invalid argument to an operation (grid sizes, bin counts, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two grids that must share nodes do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// An experiment precondition was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
