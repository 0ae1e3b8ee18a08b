use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({0}, {1}) lies outside the computational domain")]
    OutOfDomain(f64, f64),
    #[error("root {root} is not isolated: another zero of h lies within {radius}")]
    NonIsolatedRoot { root: f64, radius: f64 },
    #[error("dyadic log-log slopes near root {root} are not close to an integer: {slopes:?}")]
    SlopeUnstable { root: f64, slopes: Vec<f64> },
    #[error("CC ball of radius {radius} touches the domain boundary")]
    BallTouchesBoundary { radius: f64 },
    #[error("every sampled pair was degenerate")]
    DegeneratePair,
    #[error("linear solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("measures live on different grids")]
    GridMismatch,
    #[error("measure is not normalized (mass {mass})")]
    NotNormalized { mass: f64 },
    #[error("exact transport needs at most {max} cells, got {cells}")]
    TooLarge { cells: usize, max: usize },
    #[error("Hopf variable lost positivity: w_min = {w_min:e} below barrier {barrier:e}")]
    PositivityLost { w_min: f64, barrier: f64 },
    #[error("CFL number {cfl} exceeds {limit}")]
    CflViolated { cfl: f64, limit: f64 },
    #[error("negative density {min:e} produced")]
    NegativeDensity { min: f64 },
    #[error("comparison violated by {violation:e}")]
    OrderViolated { violation: f64 },
    #[error("feedback field is not defined at the requested point")]
    FeedbackOutOfDomain,
    #[error("fixed-point iteration stopped after {iterations} iterations with gap {gap:e}")]
    NotConverged {
        iterations: usize,
        gap: f64,
        best: Box<crate::mfg::MfgSolution>,
    },
    #[error("solutions were produced from different configurations")]
    ConfigMismatch,
    #[error("assumption {name} violated: {detail}")]
    AssumptionViolated { name: String, detail: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
