use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("grid mismatch: expected {expected} nodes, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("profile crossed zero at r = {r}")]
    ZeroCrossing { r: f64 },

    #[error("tail constant not converged: relative drift {drift:.3e} exceeds {tol:.3e}")]
    TailNotConverged { drift: f64, tol: f64 },

    #[error("shooting bracket [{lo}, {hi}] does not straddle the ground state")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("first eigenvector changes sign at node {node}")]
    EigenvectorSignChange { node: usize },

    #[error("non-integrable input: {0}")]
    NonIntegrable(String),

    #[error("step size collapsed to {dt:.3e} at t = {t} while sup norm {sup:.3e} is below the cap")]
    StepCollapse { t: f64, dt: f64, sup: f64 },

    #[error("boundary reflections reach the sponge diagnostic threshold ({fraction:.3e}) at t = {t}")]
    ReflectionContamination { t: f64, fraction: f64 },

    #[error("no blow-up detected before t = {horizon}")]
    NoBlowUp { horizon: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
