//! Radial steady states of `-Δφ + Vφ = f(φ)`.

mod emden;
mod shooting;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{hermite, radial_laplacian4, GridKind, OriginStencil, RadialGrid};
use crate::problem::{decay_exponent, q_of_alpha, script_q, sobolev_exponent, Nonlinearity, Potential, ProblemSpec};

pub use emden::{ef_operator_residual, ef_residual, emden_fowler, EmdenFowler};
pub use shooting::{
    potential_shot_outcome, shoot_supercritical, shoot_with_potential, PotentialShot, ShotOutcome, DEFAULT_SHOOT_RTOL, SERIES_START,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    CriticalBubble { lambda: f64 },
    Exp2d { lambda: f64 },
    ShootSupercritical { alpha: f64 },
    ShootPotential { alpha: f64, potential: Potential },
    /// The trivial solution `φ ≡ 0`.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateProfile {
    n: u32,
    grid: RadialGrid,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    family: Family,
    nonlinearity: Nonlinearity,
    asymptotic_constant: Option<f64>,
}

impl SteadyStateProfile {
    pub(crate) fn from_parts(
        n: u32,
        grid: RadialGrid,
        phi: Vec<f64>,
        dphi: Vec<f64>,
        family: Family,
        nonlinearity: Nonlinearity,
        asymptotic_constant: Option<f64>,
    ) -> Self {
        Self { n, grid, phi, dphi, family, nonlinearity, asymptotic_constant }
    }

    /// The zero steady state, valid whenever `f(0) = 0`.
    pub fn zero(n: u32, nonlinearity: Nonlinearity, grid: &RadialGrid) -> Result<Self> {
        if nonlinearity.f(0.0) != 0.0 {
            return Err(Error::precondition(format!("φ ≡ 0 is not a steady state for {nonlinearity}")));
        }
        let len = grid.len();
        Ok(Self::from_parts(n, grid.clone(), vec![0.0; len], vec![0.0; len], Family::Zero, nonlinearity, None))
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn dphi(&self) -> &[f64] {
        &self.dphi
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn asymptotic_constant(&self) -> Option<f64> {
        self.asymptotic_constant
    }

    /// `(φ(r), φ'(r))`: exact for closed-form families, cubic Hermite
    /// interpolation otherwise. `None` beyond the stored grid for sampled
    /// families.
    pub fn value_at(&self, r: f64) -> Option<(f64, f64)> {
        match self.family {
            Family::CriticalBubble { lambda } => Some(bubble(self.n, lambda, r)),
            Family::Exp2d { lambda } => Some(exp2d(lambda, r)),
            Family::Zero => Some((0.0, 0.0)),
            Family::ShootSupercritical { .. } | Family::ShootPotential { .. } => {
                hermite(&self.grid, &self.phi, &self.dphi, r)
            }
        }
    }

    /// The same steady state sampled on another grid.
    pub fn resample(&self, grid: &RadialGrid) -> Result<Self> {
        if grid == &self.grid {
            return Ok(self.clone());
        }
        let mut phi = Vec::with_capacity(grid.len());
        let mut dphi = Vec::with_capacity(grid.len());
        for &r in grid.nodes() {
            let (v, d) = self.value_at(r).ok_or_else(|| {
                Error::precondition(format!("cannot extend a sampled profile beyond r = {}", self.grid.r_max()))
            })?;
            phi.push(v);
            dphi.push(d);
        }
        Ok(Self { grid: grid.clone(), phi, dphi, ..self.clone() })
    }

    pub fn is_compatible(&self, spec: &ProblemSpec) -> bool {
        spec.n == self.n && spec.nonlinearity == self.nonlinearity
    }

    /// Columnar text form: one JSON metadata line, a column header, then
    /// `r phi dphi` rows in shortest round-trip notation.
    pub fn to_text(&self) -> String {
        let meta = ProfileMeta {
            n: self.n,
            family: self.family,
            nonlinearity: self.nonlinearity,
            grid: self.grid.kind(),
            asymptotic_constant: self.asymptotic_constant,
        };
        let mut out = format!("# instablab-profile {}\nr phi dphi\n", serde_json::to_string(&meta).unwrap());
        for ((r, v), d) in self.grid.nodes().iter().zip(&self.phi).zip(&self.dphi) {
            out.push_str(&format!("{r:e} {v:e} {d:e}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = crate::strip_preamble(text).lines();
        let meta: ProfileMeta = lines
            .next()
            .and_then(|l| l.strip_prefix("# instablab-profile "))
            .ok_or_else(|| Error::Parse("missing profile header".into()))
            .and_then(|m| serde_json::from_str(m).map_err(|e| Error::Parse(format!("profile header: {e}"))))?;
        if lines.next().map(str::trim) != Some("r phi dphi") {
            return Err(Error::Parse("missing `r phi dphi` column header".into()));
        }
        let (mut r, mut phi, mut dphi) = (Vec::new(), Vec::new(), Vec::new());
        for (idx, line) in lines.enumerate() {
            let cols: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {e}", idx + 1))))
                .collect::<Result<_>>()?;
            if cols.len() != 3 {
                return Err(Error::Parse(format!("row {} has {} columns", idx + 1, cols.len())));
            }
            r.push(cols[0]);
            phi.push(cols[1]);
            dphi.push(cols[2]);
        }
        let grid = RadialGrid::from_nodes(meta.grid, r)?;
        Ok(Self::from_parts(meta.n, grid, phi, dphi, meta.family, meta.nonlinearity, meta.asymptotic_constant))
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileMeta {
    n: u32,
    family: Family,
    nonlinearity: Nonlinearity,
    grid: GridKind,
    asymptotic_constant: Option<f64>,
}

fn bubble(n: u32, lambda: f64, r: f64) -> (f64, f64) {
    let nf = n as f64;
    let m = (nf - 2.0) / 2.0;
    let den = lambda * lambda + r * r;
    let phi = (lambda * (nf * (nf - 2.0)).sqrt() / den).powf(m);
    (phi, -2.0 * m * r / den * phi)
}

fn exp2d(lambda: f64, r: f64) -> (f64, f64) {
    let l2 = lambda * lambda;
    let den = 4.0 + l2 * r * r;
    ((32.0 * l2).ln() - 2.0 * den.ln(), -4.0 * l2 * r / den)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("scale λ must be positive, got {lambda}")));
    }
    Ok(())
}

fn sample(grid: &RadialGrid, f: impl Fn(f64) -> (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    grid.nodes().iter().map(|&r| f(r)).unzip()
}

/// Centred critical bubble `(λ√(n(n-2)) / (λ² + r²))^{(n-2)/2}`.
pub fn critical_bubble(n: u32, lambda: f64, grid: &RadialGrid) -> Result<SteadyStateProfile> {
    let p = sobolev_exponent(n).ok_or_else(|| Error::precondition("critical bubble needs n > 2"))?;
    check_lambda(lambda)?;
    let (phi, dphi) = sample(grid, |r| bubble(n, lambda, r));
    Ok(SteadyStateProfile::from_parts(
        n,
        grid.clone(),
        phi,
        dphi,
        Family::CriticalBubble { lambda },
        Nonlinearity::Power { p },
        None,
    ))
}

/// Centred planar solution `log[32λ² (4 + λ²r²)^{-2}]` of `-Δφ = e^φ`.
pub fn exp_steady_2d(lambda: f64, grid: &RadialGrid) -> Result<SteadyStateProfile> {
    check_lambda(lambda)?;
    let (phi, dphi) = sample(grid, |r| exp2d(lambda, r));
    Ok(SteadyStateProfile::from_parts(
        2,
        grid.clone(),
        phi,
        dphi,
        Family::Exp2d { lambda },
        Nonlinearity::Exponential,
        None,
    ))
}

/// Pointwise values of `-Δφ + Vφ - f(φ)` at nodes `0..len-2`, using the
/// fourth-order radial Laplacian. Requires a uniform grid.
pub fn residual_samples(profile: &SteadyStateProfile, spec: &ProblemSpec) -> Result<Vec<f64>> {
    if spec.n != profile.n {
        return Err(Error::precondition(format!(
            "profile dimension {} does not match spec dimension {}",
            profile.n, spec.n
        )));
    }
    let grid = profile.grid();
    if !grid.is_uniform() {
        return Err(Error::precondition("finite-difference residual needs a uniform grid"));
    }
    let potential = spec.potential();
    let origin = if potential.is_even_at_origin() { OriginStencil::Reflect } else { OriginStencil::OneSided };
    let lap = radial_laplacian4(&profile.phi, grid.spacing(), spec.n, origin);
    Ok(grid
        .nodes()
        .iter()
        .zip(&profile.phi)
        .zip(&lap)
        .take(grid.len() - 2)
        .map(|((&r, &v), &l)| -l + potential.eval(r) * v - spec.nonlinearity.f(v))
        .collect())
}

/// Maximum absolute residual over interior nodes.
pub fn residual(profile: &SteadyStateProfile, spec: &ProblemSpec) -> Result<f64> {
    Ok(residual_samples(profile, spec)?.iter().fold(0.0, |m, v| m.max(v.abs())))
}

/// Residual divided by the size of the reaction and potential terms.
pub fn relative_residual(profile: &SteadyStateProfile, spec: &ProblemSpec) -> Result<f64> {
    let res = residual(profile, spec)?;
    let potential = spec.potential();
    let scale = profile
        .grid()
        .nodes()
        .iter()
        .zip(&profile.phi)
        .map(|(&r, &v)| spec.nonlinearity.f(v).abs() + (potential.eval(r) * v).abs())
        .fold(0.0, f64::max);
    Ok(if res == 0.0 { 0.0 } else { res / scale })
}

/// Checks `r² φ^{p-1} ≤ Q(2/(p-1)) (1 + tol)` at every node. Only meaningful
/// where `((n-2)/2)² ≥ p Q(2/(p-1))`; other inputs are rejected.
pub fn verify_pointwise_bound(profile: &SteadyStateProfile, p: f64, tol: f64) -> Result<bool> {
    let n = profile.n;
    let sob = sobolev_exponent(n).ok_or_else(|| Error::precondition("pointwise bound needs n > 2"))?;
    if p <= sob {
        return Err(Error::precondition(format!("pointwise bound needs p > {sob}, got {p}")));
    }
    if script_q(n, p) < 0.0 {
        return Err(Error::precondition(format!(
            "((n-2)/2)² < p·Q(2/(p-1)) at n = {n}, p = {p}; the bound does not apply"
        )));
    }
    let q = q_of_alpha(n, decay_exponent(p));
    Ok(profile
        .grid
        .nodes()
        .iter()
        .zip(&profile.phi)
        .all(|(&r, &v)| r * r * v.max(0.0).powf(p - 1.0) <= q * (1.0 + tol)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::EquationKind;

    fn spec_power(n: u32, p: f64) -> ProblemSpec {
        ProblemSpec::power(n, p).unwrap()
    }

    #[test]
    fn bubble_point_values() {
        let g = RadialGrid::uniform(40.0, 4001).unwrap();
        let b = critical_bubble(3, 1.0, &g).unwrap();
        assert!((b.phi()[0] - 3f64.powf(0.25)).abs() < 1e-14);
        assert!((b.value_at(1.0).unwrap().0 - 3f64.powf(0.25) / 2f64.sqrt()).abs() < 1e-14);
        assert!((b.phi()[0] - 1.31607).abs() < 1e-5);
        let b4 = critical_bubble(4, 2.0, &g).unwrap();
        assert!((b4.phi()[0] - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(b.dphi()[0], 0.0);
        assert!(b.phi().iter().all(|&v| v > 0.0));
        assert!(critical_bubble(2, 1.0, &g).is_err());
        assert!(critical_bubble(3, 0.0, &g).is_err());
    }

    #[test]
    fn exp_profile_values() {
        let g = RadialGrid::uniform(40.0, 4001).unwrap();
        let e = exp_steady_2d(1.0, &g).unwrap();
        assert!((e.phi()[0] - 2f64.ln()).abs() < 1e-15);
        let e2 = exp_steady_2d(2.0, &g).unwrap();
        let (a, _) = e2.value_at(1e3).unwrap();
        let (b, _) = e2.value_at(1e4).unwrap();
        assert!(((a - b) / 10f64.ln() - 4.0).abs() < 1e-5);
    }

    #[test]
    fn bubble_residual_is_small_and_fourth_order() {
        let spec = spec_power(3, 5.0);
        let res = |nodes: usize| {
            let g = RadialGrid::uniform(40.0, nodes).unwrap();
            relative_residual(&critical_bubble(3, 1.0, &g).unwrap(), &spec).unwrap()
        };
        let (coarse, fine) = (res(2049), res(4097));
        assert!(fine < 1e-6, "{fine}");
        assert!((coarse / fine).log2() > 3.5, "{coarse} {fine}");
    }

    #[test]
    fn zero_profile_has_zero_residual() {
        let g = RadialGrid::uniform(10.0, 101).unwrap();
        let spec = spec_power(3, 3.0);
        let z = SteadyStateProfile::zero(3, spec.nonlinearity, &g).unwrap();
        assert_eq!(residual(&z, &spec).unwrap(), 0.0);
        assert!(SteadyStateProfile::zero(2, Nonlinearity::Exponential, &g).is_err());
    }

    #[test]
    fn residual_rejects_stretched_grid_and_dimension_mismatch() {
        let g = RadialGrid::stretched(40.0, 257, 0.01).unwrap();
        let b = critical_bubble(3, 1.0, &g).unwrap();
        assert!(residual(&b, &spec_power(3, 5.0)).is_err());
        let u = RadialGrid::uniform(40.0, 257).unwrap();
        let b = critical_bubble(3, 1.0, &u).unwrap();
        assert!(residual(&b, &spec_power(4, 3.0)).is_err());
    }

    #[test]
    fn exp_residual() {
        let g = RadialGrid::uniform(40.0, 4096).unwrap();
        let spec = ProblemSpec::new(2, Nonlinearity::Exponential, 0.0, EquationKind::Heat).unwrap();
        let r = relative_residual(&exp_steady_2d(1.0, &g).unwrap(), &spec).unwrap();
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let g = RadialGrid::stretched(50.0, 300, 0.01).unwrap();
        let b = critical_bubble(5, 0.7, &g).unwrap();
        let back = SteadyStateProfile::from_text(&b.to_text()).unwrap();
        assert_eq!(back, b);
        for (x, y) in back.phi().iter().zip(b.phi()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!(SteadyStateProfile::from_text("r phi dphi\n1 2 3\n").is_err());
    }

    #[test]
    fn resample_closed_form_matches_direct_construction() {
        let a = RadialGrid::uniform(20.0, 201).unwrap();
        let b = RadialGrid::uniform(20.0, 401).unwrap();
        let p = critical_bubble(3, 1.0, &a).unwrap().resample(&b).unwrap();
        assert_eq!(p, critical_bubble(3, 1.0, &b).unwrap());
    }

    #[test]
    fn pointwise_bound_preconditions() {
        let g = RadialGrid::uniform(10.0, 101).unwrap();
        let b = critical_bubble(3, 1.0, &g).unwrap();
        assert!(verify_pointwise_bound(&b, 5.0, 1e-9).is_err());
        let z = SteadyStateProfile::zero(12, Nonlinearity::Power { p: 3.5 }, &g).unwrap();
        assert!(matches!(verify_pointwise_bound(&z, 3.5, 1e-9), Err(Error::Precondition(_))));
        let z = SteadyStateProfile::zero(20, Nonlinearity::Power { p: 4.0 }, &g).unwrap();
        assert!(verify_pointwise_bound(&z, 4.0, 1e-9).unwrap());
    }
}
