use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("bad grid: {0}")]
    BadGrid(String),

    #[error("fields live on different grids or frames: {0}")]
    GridMismatch(String),

    #[error("radius {rho} outside grid extent [0, {r_max}]")]
    OutOfRange { rho: f64, r_max: f64 },

    #[error("mollification width {epsilon} resolved by {cells} cells (need at least {required})")]
    UnderResolved { epsilon: f64, cells: usize, required: usize },

    #[error("Newton iteration diverged at t={time}: last residual {residual:e} after {iterations} iterations")]
    NewtonDiverged { time: f64, residual: f64, iterations: usize },

    #[error("positivity lost at t={time}: minimum value {min:e}")]
    NegativeUndershoot { time: f64, min: f64 },

    #[error("iteration failed to converge: {0}")]
    ConvergenceFailure(String),

    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("saturation not reached up to varkappa={last_varkappa:e}: last relative change {last_change:e}")]
    NotSaturated { last_varkappa: f64, last_change: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("minimizer is trivial (norm {0:e}); p >= p* or bad initial guess")]
    TrivialMinimizer(f64),

    #[error("maximum iterations ({0}) reached")]
    MaxIterations(usize),

    #[error("no sign change of the shooting discriminant in [{lo:e}, {hi:e}]")]
    BracketNotFound { lo: f64, hi: f64 },

    #[error("decay violated: v*exp(xi^2/8) grows over the last quarter of the domain")]
    DecayViolated,
}
