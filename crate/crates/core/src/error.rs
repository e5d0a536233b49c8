use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("multiplier is undefined at j = 0 but the input has a nonzero mean component")]
    MeanComponent,

    #[error("Dirichlet-Neumann expansion diverges: term ratio {ratio:.3} stayed above 0.9 (order {order}); surface too large for the chosen order")]
    DnoDivergence { order: usize, ratio: f64 },

    #[error("state must be zero-mean: {0}")]
    NonZeroMean(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("bound exceeded: {0}")]
    BoundExceeded(String),

    #[error("no admissible tangential set found in range after {candidates} candidates")]
    Exhausted { candidates: usize },

    #[error("twist matrix is singular (|det| = {det:e})")]
    SingularTwist { det: f64 },

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("integrator step rejected at t = {t}: local error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    StepRejected { t: f64, estimate: f64, tolerance: f64 },

    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("Jacobian is ill conditioned: smallest singular value {sigma_min:e}")]
    IllConditioned { sigma_min: f64 },

    #[error("initial residual {residual:e} is outside the Newton basin (threshold {threshold:e})")]
    Basin { residual: f64, threshold: f64 },

    #[error("truncation too small: {0}")]
    Truncation(String),

    #[error("branch tracking is ambiguous for j = {j}: dominant mass {mass:.3} < 0.5")]
    BranchAmbiguity { j: i64, mass: f64 },

    #[error("small divisor at l = {ell:?}: |divisor| = {divisor:e} below {threshold:e}")]
    SmallDivisor { ell: Vec<i64>, divisor: f64, threshold: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
