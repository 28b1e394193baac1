//! Steady states, linearized spectra and instability dynamics for
//! `∂_t u - Δu + Vu = f(u)` and its damped wave counterpart, restricted to
//! radial functions in `R^n`.

pub mod dynamics;
pub mod error;
pub mod fit;
pub mod grid;
pub mod ode;
pub mod odelemmas;
pub mod problem;
pub mod spectrum;
pub mod steady;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{GridKind, RadialGrid};
pub use problem::{
    classify, CriticalExponent, Classification, DichotomyReport, EquationKind, Nonlinearity,
    Potential, ProblemSpec,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Drops leading `#` comment lines that are not an `# instablab-` header, so
/// annotated files still parse.
pub(crate) fn strip_preamble(text: &str) -> &str {
    let mut rest = text;
    while rest.starts_with('#') && !rest.starts_with("# instablab-") {
        rest = rest.split_once('\n').map_or("", |(_, tail)| tail);
    }
    rest
}
