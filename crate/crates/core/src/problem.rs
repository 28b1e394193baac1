//! Problem descriptions and closed-form exponent algebra.
//!
//! Everything here is arithmetic on `(n, p)`: the quadratic `Q(alpha)`, the
//! Hardy constant, the stability polynomial `script_q(p)`, the critical
//! exponent `p_c` and the resulting stability classification.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{radial_inner, RadialGrid};

/// Relative tolerance used when comparing an exponent against a threshold
/// that is not exactly representable.
pub const EXPONENT_TOL: f64 = 1e-12;

/// Radial potential `V(r)` in `-Δu + V u = f(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Zero,
    Constant { value: f64 },
    /// `c * (1 + r)^(-l)`
    AlgebraicDecay { c: f64, l: f64 },
    /// `coupling * max(r, 1)^(-2)`
    InverseSquareTail { coupling: f64 },
}

impl Potential {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Constant { value } => value,
            Potential::AlgebraicDecay { c, l } => c * (1.0 + r).powf(-l),
            Potential::InverseSquareTail { coupling } => coupling / r.max(1.0).powi(2),
        }
    }

    /// Whether `V(|x|)` is smooth at the origin, i.e. `V` has no odd powers of
    /// `r` there.
    pub fn is_even_at_origin(&self) -> bool {
        !matches!(self, Potential::AlgebraicDecay { .. })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Potential::Zero)
    }

    /// `V = -(1 + eps) * hardy(n) * max(r, 1)^(-2)`.
    pub fn supercritical_hardy(n: u32, eps: f64) -> Result<Self> {
        Ok(Potential::InverseSquareTail { coupling: -(1.0 + eps) * hardy_constant(n)? })
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Zero => write!(f, "zero"),
            Potential::Constant { value } => write!(f, "const:{value:e}"),
            Potential::AlgebraicDecay { c, l } => write!(f, "decay:{c:e}:{l:e}"),
            Potential::InverseSquareTail { coupling } => write!(f, "invsq:{coupling:e}"),
        }
    }
}

impl FromStr for Potential {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::Parse(format!("potential `{s}` is missing a field")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("potential `{s}`: {e}")))
        };
        match (parts[0], parts.len()) {
            ("zero", 1) => Ok(Potential::Zero),
            ("const", 2) => Ok(Potential::Constant { value: num(1)? }),
            ("decay", 3) => Ok(Potential::AlgebraicDecay { c: num(1)?, l: num(2)? }),
            ("invsq", 2) => Ok(Potential::InverseSquareTail { coupling: num(1)? }),
            _ => Err(Error::Parse(format!("unknown potential `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Nonlinearity {
    /// `f(u) = |u|^p`
    Power { p: f64 },
    /// `f(u) = e^u`
    Exponential,
    /// `f(u) = |u|^p` together with a potential term `V u`.
    PowerWithPotential { p: f64, potential: Potential },
}

impl Nonlinearity {
    pub fn f(&self, u: f64) -> f64 {
        match *self {
            Nonlinearity::Power { p } | Nonlinearity::PowerWithPotential { p, .. } => u.abs().powf(p),
            Nonlinearity::Exponential => u.exp(),
        }
    }

    pub fn df(&self, u: f64) -> f64 {
        match *self {
            Nonlinearity::Power { p } | Nonlinearity::PowerWithPotential { p, .. } => {
                p * u.abs().powf(p - 1.0) * u.signum()
            }
            Nonlinearity::Exponential => u.exp(),
        }
    }

    pub fn exponent(&self) -> Option<f64> {
        match *self {
            Nonlinearity::Power { p } | Nonlinearity::PowerWithPotential { p, .. } => Some(p),
            Nonlinearity::Exponential => None,
        }
    }

    pub fn potential(&self) -> Potential {
        match *self {
            Nonlinearity::PowerWithPotential { potential, .. } => potential,
            _ => Potential::Zero,
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Power { p } => write!(f, "power:{p:e}"),
            Nonlinearity::Exponential => write!(f, "exp"),
            Nonlinearity::PowerWithPotential { p, potential } => write!(f, "power:{p:e}+{potential}"),
        }
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "exp" {
            return Ok(Nonlinearity::Exponential);
        }
        let rest = s
            .strip_prefix("power:")
            .ok_or_else(|| Error::Parse(format!("unknown nonlinearity `{s}`")))?;
        let (p, potential) = match rest.split_once('+') {
            Some((p, pot)) => (p, Some(pot.parse::<Potential>()?)),
            None => (rest, None),
        };
        let p: f64 = p.parse().map_err(|e| Error::Parse(format!("exponent in `{s}`: {e}")))?;
        Ok(match potential {
            Some(potential) => Nonlinearity::PowerWithPotential { p, potential },
            None => Nonlinearity::Power { p },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationKind {
    Heat,
    Wave,
}

/// One instance of `∂_t u + Lu = f(u)` or `∂_t² u + a ∂_t u + Lu = f(u)` with
/// `L = -Δ + V` on radial functions in `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: u32,
    pub nonlinearity: Nonlinearity,
    pub damping: f64,
    pub equation: EquationKind,
}

impl ProblemSpec {
    pub fn new(n: u32, nonlinearity: Nonlinearity, damping: f64, equation: EquationKind) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if let Some(p) = nonlinearity.exponent() {
            if !(p > 1.0 && p.is_finite()) {
                return Err(Error::invalid(format!("power nonlinearity needs p > 1, got {p}")));
            }
        }
        if !damping.is_finite() {
            return Err(Error::invalid("damping must be finite"));
        }
        Ok(Self { n, nonlinearity, damping, equation })
    }

    pub fn power(n: u32, p: f64) -> Result<Self> {
        Self::new(n, Nonlinearity::Power { p }, 0.0, EquationKind::Heat)
    }

    pub fn with_equation(mut self, equation: EquationKind, damping: f64) -> Self {
        self.equation = equation;
        self.damping = damping;
        self
    }

    pub fn potential(&self) -> Potential {
        self.nonlinearity.potential()
    }

    /// Exponential steady states are only classified in the plane.
    pub fn require_exponential_plane(&self) -> Result<()> {
        if matches!(self.nonlinearity, Nonlinearity::Exponential) && self.n != 2 {
            return Err(Error::precondition("exponential steady states require n = 2"));
        }
        Ok(())
    }

    /// Supercritical power studies need `n > 2` and `p ≥ (n+2)/(n-2)`.
    pub fn require_supercritical(&self) -> Result<f64> {
        let p = self
            .nonlinearity
            .exponent()
            .ok_or_else(|| Error::precondition("supercritical study needs a power nonlinearity"))?;
        let sob = sobolev_exponent(self.n)
            .ok_or_else(|| Error::precondition("supercritical study needs n > 2"))?;
        if p < sob * (1.0 - EXPONENT_TOL) {
            return Err(Error::precondition(format!("p = {p} is below the Sobolev exponent {sob}")));
        }
        Ok(p)
    }
}

/// `Q(alpha) = alpha (n - 2 - alpha)`.
pub fn q_of_alpha(n: u32, alpha: f64) -> f64 {
    alpha * (n as f64 - 2.0 - alpha)
}

/// Sharp Hardy constant `((n-2)/2)^2`.
pub fn hardy_constant(n: u32) -> Result<f64> {
    if n <= 2 {
        return Err(Error::precondition(format!("Hardy constant needs n > 2, got {n}")));
    }
    let half = (n as f64 - 2.0) / 2.0;
    Ok(half * half)
}

/// `(n+2)/(n-2)`, or `None` for `n ≤ 2`.
pub fn sobolev_exponent(n: u32) -> Option<f64> {
    (n > 2).then(|| (n as f64 + 2.0) / (n as f64 - 2.0))
}

/// `k = 2/(p-1)`.
pub fn decay_exponent(p: f64) -> f64 {
    2.0 / (p - 1.0)
}

/// Expanded stability polynomial
/// `(n-2)(n-10) p² - 2(n²-8n+4) p + (n-2)²`.
pub fn script_q(n: u32, p: f64) -> f64 {
    let n = n as f64;
    (n - 2.0) * (n - 10.0) * p * p - 2.0 * (n * n - 8.0 * n + 4.0) * p + (n - 2.0) * (n - 2.0)
}

/// The same polynomial in factored form
/// `4(p-1)² [((n-2)/2)² - p Q(2/(p-1))]`.
pub fn script_q_factored(n: u32, p: f64) -> f64 {
    let half = (n as f64 - 2.0) / 2.0;
    4.0 * (p - 1.0).powi(2) * (half * half - p * q_of_alpha(n, decay_exponent(p)))
}

/// An exponent threshold that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalExponent {
    Finite(f64),
    Infinite,
}

impl CriticalExponent {
    pub fn as_f64(&self) -> f64 {
        match *self {
            CriticalExponent::Finite(v) => v,
            CriticalExponent::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, CriticalExponent::Finite(_))
    }

    /// Compares a real exponent against the threshold; infinity dominates.
    pub fn compare(&self, p: f64) -> Ordering {
        match *self {
            CriticalExponent::Infinite => Ordering::Greater,
            CriticalExponent::Finite(pc) => {
                if (p - pc).abs() <= EXPONENT_TOL * pc.abs() {
                    Ordering::Equal
                } else if pc > p {
                    Ordering::Greater
                } else {
                    Ordering::Less
                }
            }
        }
    }
}

impl fmt::Display for CriticalExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CriticalExponent::Finite(v) => write!(f, "{v}"),
            CriticalExponent::Infinite => write!(f, "inf"),
        }
    }
}

/// Larger root of `script_q`, infinite for `n ≤ 10`.
pub fn p_critical(n: u32) -> Result<CriticalExponent> {
    if n <= 2 {
        return Err(Error::precondition(format!("critical exponent needs n > 2, got {n}")));
    }
    if n <= 10 {
        return Ok(CriticalExponent::Infinite);
    }
    let nf = n as f64;
    let num = nf * nf - 8.0 * nf + 4.0 + 8.0 * (nf - 1.0).sqrt();
    Ok(CriticalExponent::Finite(num / ((nf - 2.0) * (nf - 10.0))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Unstable,
    LinearlyStable,
    NoPositiveSteadyState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub n: u32,
    pub p: f64,
    /// `(n+2)/(n-2)`; absent for `n ≤ 2`.
    pub sobolev_exponent: Option<f64>,
    pub q_of_k: f64,
    pub hardy: f64,
    pub script_q: f64,
    /// Absent for `n ≤ 2`.
    pub p_c: Option<CriticalExponent>,
    pub classification: Classification,
}

/// Stability classification of positive radial steady states of `-Δφ = φ^p`.
pub fn classify(n: u32, p: f64) -> Result<DichotomyReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("classification needs finite p > 1, got {p}")));
    }
    let sob = sobolev_exponent(n);
    let p_c = if n > 2 { Some(p_critical(n)?) } else { None };
    let half = (n as f64 - 2.0) / 2.0;
    let classification = match (sob, p_c) {
        (Some(sob), Some(pc)) if p >= sob * (1.0 - EXPONENT_TOL) => {
            if pc.compare(p) == Ordering::Greater {
                Classification::Unstable
            } else {
                Classification::LinearlyStable
            }
        }
        _ => Classification::NoPositiveSteadyState,
    };
    Ok(DichotomyReport {
        n,
        p,
        sobolev_exponent: sob,
        q_of_k: q_of_alpha(n, decay_exponent(p)),
        hardy: half * half,
        script_q: script_q(n, p),
        p_c,
        classification,
    })
}

/// Positive root `(a + sqrt(a² + 4σ²))/2` of `c² - a c - σ² = 0`.
pub fn instability_coefficient(a: f64, sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) {
        return Err(Error::precondition(format!("sigma² must be positive, got {sigma_sq}")));
    }
    let disc = (a * a + 4.0 * sigma_sq).sqrt();
    if a >= 0.0 {
        Ok(0.5 * (a + disc))
    } else {
        Ok(2.0 * sigma_sq / (disc - a))
    }
}

/// Kaplan pairing of a perturbation with the ground state.
///
/// With `psi1` present this is `c ∫χψ₀ + ∫χψ₁`, `c` the instability
/// coefficient for damping `a`; without it, `∫χψ₀`. A positive value admits the
/// perturbation to the instability theorems.
pub fn perturbation_pairing(
    grid: &RadialGrid,
    n: u32,
    chi: &[f64],
    psi0: &[f64],
    psi1: Option<&[f64]>,
    a: f64,
    sigma_sq: f64,
) -> Result<f64> {
    grid.check_samples(chi)?;
    grid.check_samples(psi0)?;
    if chi.iter().any(|&c| c < 0.0) {
        return Err(Error::precondition("pairing needs a non-negative eigenfunction"));
    }
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if !finite(chi) || !finite(psi0) || psi1.is_some_and(|v| !finite(v)) {
        return Err(Error::NonIntegrable("non-finite samples in pairing".into()));
    }
    let first = radial_inner(grid, n, chi, psi0);
    let value = match psi1 {
        None => first,
        Some(psi1) => {
            grid.check_samples(psi1)?;
            instability_coefficient(a, sigma_sq)? * first + radial_inner(grid, n, chi, psi1)
        }
    };
    if !value.is_finite() {
        return Err(Error::NonIntegrable("pairing integral diverged".into()));
    }
    Ok(value)
}
