use thiserror::Error;

/// Failure modes surfaced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("not in X(0): complex Hessian of the weight is not positive definite (min eigenvalue {min_eigenvalue:.3e} at |z| = {radius:.3e})")]
    NotPlurisubharmonic { min_eigenvalue: f64, radius: f64 },

    #[error("ill-conditioned: {0}")]
    Conditioning(String),

    #[error("grid too small: tail mass estimate {tail:.3e} exceeds tolerance {tol:.1e}")]
    GridTooSmall { tail: f64, tol: f64 },

    #[error("grid does not resolve the Gaussian scale: h = {spacing:.4e} > {max_spacing:.4e}; use at least {suggested_points} points per side")]
    Resolution {
        spacing: f64,
        max_spacing: f64,
        suggested_points: usize,
    },

    #[error("density {value:.4e} below rho_min {rho_min:.4e}")]
    DensityBelowMinimum { value: f64, rho_min: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("kernel grids do not share nodes")]
    MismatchedNodes,

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
