use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("exponent beta = {beta} outside (0, {max}]")]
    BetaRange { beta: f64, max: f64 },

    #[error("operation requires a spacetime measure")]
    SpacetimeRequired,

    #[error("operation requires a spatial measure")]
    SpatialRequired,

    #[error("region exits the grid box")]
    RegionOutsideGrid,

    #[error("region contains no grid cells")]
    EmptyRegion,

    #[error("solver did not converge: residual {residual:.3e} after {iterations} iterations")]
    NoConvergence {
        residual: f64,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("linear solve failed at step {step}: {reason}")]
    LinearSolve { step: usize, reason: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
