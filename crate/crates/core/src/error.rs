use thiserror::Error;

/// Errors raised by the solvers and model constructors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// An invalid distribution or solver configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested method is not available for this instance.
    #[error("unsupported method: {0}")]
    Unsupported(String),

    /// The operation does not apply to the given model (e.g. asymmetric supplies).
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// An iterative solver stopped without meeting its tolerances.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
        /// Best iterate seen, in the solver's own parametrization.
        best: Vec<f64>,
    },

    /// A linear system had a numerically zero pivot.
    #[error("singular matrix: pivot {pivot} is {value:.3e}")]
    Singular { pivot: usize, value: f64 },

    /// A theoretical invariant failed, usually because of upstream integration error.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
