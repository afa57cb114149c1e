use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A numerical identity that must hold by construction was violated.
    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    /// The solver hit its iteration limit. Carries the best iterate found.
    #[error("solver did not converge after {iterations} iterations (KKT residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
