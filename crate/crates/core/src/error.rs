use thiserror::Error;

/// Errors raised by the geometry, exit and Monte Carlo routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {0:?} lies outside the state domain")]
    OutsideDomain(Vec<f64>),
    #[error("diffusion matrix is not symmetric positive definite at {0:?}")]
    NotSpd(Vec<f64>),
    #[error("correlation |rho| = {0} makes the diffusion matrix singular")]
    DegenerateCorrelation(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("optimizer stopped after {iterations} iterations with gradient sup-norm {grad_norm:e}")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("geodesic endpoints coincide")]
    CoincidentPoints,
    #[error("point does not lie on the geodesic arc")]
    PointNotOnArc,
    #[error("endpoints lie on opposite sides of the barrier")]
    EndpointsStraddleBarrier,
    #[error("endpoint lies outside the domain D")]
    EndpointOutsideDomain,
    #[error(
        "model is not complete for its induced distance (the boundary of the state space is at \
         finite distance, as for Heston/CIR); exit asymptotics are not available"
    )]
    IncompleteModel,
    #[error("both distances to the boundary point are zero")]
    BothZero,
    #[error("no exit observed at t = {t} with {n_paths} paths; smallest usable t is {smallest_usable_t:?}")]
    DegenerateEstimate {
        t: f64,
        n_paths: u64,
        smallest_usable_t: Option<f64>,
    },
    #[error("rejection sampler accepted no path in {0} attempts")]
    RejectionBudgetExceeded(u64),
}

pub type Result<T> = std::result::Result<T, Error>;
