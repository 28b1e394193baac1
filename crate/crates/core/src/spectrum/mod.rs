//! Linearized operator `-Δ + V - f'(φ)` and its ground state.
//!
//! The radial operator is discretized by vertex-centred finite volumes: node
//! `i` owns the shell between the neighbouring midpoints, so the mass matrix
//! is the diagonal of shell volumes `w_i` and the stiffness matrix is the
//! tridiagonal flux form with face coefficients `r_{i+1/2}^{n-1} / (r_{i+1} -
//! r_i)`. Scaling by `w^{-1/2}` gives a symmetric tridiagonal matrix whose
//! spectrum is that of the discrete operator. The last node carries the
//! Dirichlet condition.

mod characteristic;
mod report;
mod tridiag;

use crate::error::{Error, Result};
use crate::grid::{radial_integral, sphere_area, RadialGrid, MIN_NODES};
use crate::problem::{
    decay_exponent, hardy_constant, q_of_alpha, sobolev_exponent, Potential, ProblemSpec, EXPONENT_TOL,
};
use crate::steady::SteadyStateProfile;

pub use characteristic::{ef_characteristic, ef_characteristic_roots, CharacteristicRoots};
pub use tridiag::SymTridiagonal;

/// Relative change between successive Simpson halvings at which the
/// quadratic form is accepted.
pub const ENERGY_QUADRATURE_TOL: f64 = 1e-9;

/// Largest relative coarse/fine discrepancy at which the eigenvalue is
/// extrapolated.
pub const RICHARDSON_GATE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
enum Source {
    Profile(Box<SteadyStateProfile>),
    Schrodinger(Potential),
    Samples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedOperator {
    n: u32,
    grid: RadialGrid,
    effective_potential: Vec<f64>,
    source: Source,
}

/// Linearization `-Δ + V - f'(φ)` of the steady-state equation at `profile`,
/// sampled on `grid`. Sampled profiles are interpolated when `grid` lies
/// inside their domain.
pub fn build_linearized(spec: &ProblemSpec, profile: &SteadyStateProfile, grid: &RadialGrid) -> Result<LinearizedOperator> {
    if !profile.is_compatible(spec) {
        return Err(Error::precondition(format!(
            "profile (n = {}, {}) does not match spec (n = {}, {})",
            profile.n(),
            profile.nonlinearity(),
            spec.n,
            spec.nonlinearity
        )));
    }
    let local = profile
        .resample(grid)
        .map_err(|_| Error::GridMismatch { expected: profile.grid().len(), found: grid.len() })?;
    let effective_potential = grid
        .nodes()
        .iter()
        .zip(local.phi())
        .map(|(&r, &v)| effective(&local, r, v))
        .collect();
    Ok(LinearizedOperator {
        n: spec.n,
        grid: grid.clone(),
        effective_potential,
        source: Source::Profile(Box::new(local)),
    })
}

fn effective(profile: &SteadyStateProfile, r: f64, phi: f64) -> f64 {
    let nl = profile.nonlinearity();
    nl.potential().eval(r) - nl.df(phi)
}

impl LinearizedOperator {
    /// `-Δ + V` with no steady state.
    pub fn schrodinger(n: u32, potential: Potential, grid: &RadialGrid) -> Result<Self> {
        check_dimension(n)?;
        let effective_potential = grid.nodes().iter().map(|&r| potential.eval(r)).collect();
        Ok(Self { n, grid: grid.clone(), effective_potential, source: Source::Schrodinger(potential) })
    }

    /// `-Δ + W` from node samples of `W`. Such operators cannot be rebuilt on
    /// another grid, so their ground states are not extrapolated.
    pub fn from_samples(n: u32, grid: &RadialGrid, effective_potential: Vec<f64>) -> Result<Self> {
        check_dimension(n)?;
        grid.check_samples(&effective_potential)?;
        Ok(Self { n, grid: grid.clone(), effective_potential, source: Source::Samples })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn effective_potential(&self) -> &[f64] {
        &self.effective_potential
    }

    /// Bottom of the essential spectrum on the whole space; every in-scope
    /// effective potential decays.
    pub fn essential_spectrum_bottom(&self) -> f64 {
        0.0
    }

    /// `W(r)` off the grid: exact from the source where possible, linear
    /// interpolation of the samples otherwise.
    pub fn potential_at(&self, r: f64) -> Option<f64> {
        match &self.source {
            Source::Profile(profile) => profile.value_at(r).map(|(phi, _)| effective(profile, r, phi)),
            Source::Schrodinger(v) => Some(v.eval(r)),
            Source::Samples => {
                let i = self.grid.locate(r)?;
                let (r0, r1) = (self.grid.nodes()[i], self.grid.nodes()[i + 1]);
                let t = (r - r0) / (r1 - r0);
                Some((1.0 - t) * self.effective_potential[i] + t * self.effective_potential[i + 1])
            }
        }
    }

    /// The same operator on another grid.
    pub fn on_grid(&self, grid: &RadialGrid) -> Result<Self> {
        match &self.source {
            Source::Profile(profile) => {
                let nl = profile.nonlinearity();
                let spec = ProblemSpec { n: self.n, nonlinearity: nl, damping: 0.0, equation: crate::problem::EquationKind::Heat };
                build_linearized(&spec, profile, grid)
            }
            Source::Schrodinger(v) => Self::schrodinger(self.n, *v, grid),
            Source::Samples => Err(Error::precondition("sampled operators cannot be rebuilt on another grid")),
        }
    }

    fn rebuildable(&self) -> bool {
        !matches!(self.source, Source::Samples)
    }

    /// Symmetric tridiagonal form on the unknowns `0..len-1` together with
    /// the shell volumes `w_i` and face coefficients `c_{i+1/2}` (the last
    /// one couples to the Dirichlet node).
    pub fn discretize(&self) -> FiniteVolume {
        let r = self.grid.nodes();
        let m = r.len() - 1;
        let n = self.n;
        let mut weights = Vec::with_capacity(m);
        let mut flux = Vec::with_capacity(m);
        for i in 0..m {
            let lo = if i == 0 { 0.0 } else { 0.5 * (r[i - 1] + r[i]) };
            let hi = 0.5 * (r[i] + r[i + 1]);
            weights.push(shell_volume(lo, hi, n));
            flux.push(hi.powi(n as i32 - 1) / (r[i + 1] - r[i]));
        }
        let diag = (0..m)
            .map(|i| {
                let left = if i == 0 { 0.0 } else { flux[i - 1] };
                (left + flux[i]) / weights[i] + self.effective_potential[i]
            })
            .collect();
        let off = (0..m - 1).map(|i| -flux[i] / (weights[i] * weights[i + 1]).sqrt()).collect();
        FiniteVolume { matrix: SymTridiagonal { diag, off }, weights, flux }
    }
}

fn check_dimension(n: u32) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    Ok(())
}

/// `(b^n - a^n) / n` without cancellation.
fn shell_volume(a: f64, b: f64, n: u32) -> f64 {
    let mut sum = 0.0;
    let mut ap = 1.0;
    for j in 0..n {
        sum += ap * b.powi((n - 1 - j) as i32);
        ap *= a;
    }
    (b - a) * sum / n as f64
}

#[derive(Debug, Clone)]
pub struct FiniteVolume {
    pub matrix: SymTridiagonal,
    pub weights: Vec<f64>,
    pub flux: Vec<f64>,
}

impl FiniteVolume {
    /// `∫ |∇ζ|² + W ζ²` in the discrete form (without the sphere factor),
    /// with `ζ = 0` imposed at the Dirichlet node.
    fn energy(&self, zeta: &[f64]) -> f64 {
        let m = self.weights.len();
        let mut acc = 0.0;
        for i in 0..m {
            let next = if i + 1 < m { zeta[i + 1] } else { 0.0 };
            acc += self.flux[i] * (next - zeta[i]).powi(2);
            let potential = self.matrix.diag[i] - self.kinetic_diag(i);
            acc += self.weights[i] * potential * zeta[i] * zeta[i];
        }
        acc
    }

    fn kinetic_diag(&self, i: usize) -> f64 {
        let left = if i == 0 { 0.0 } else { self.flux[i - 1] };
        (left + self.flux[i]) / self.weights[i]
    }

    fn mass(&self, zeta: &[f64]) -> f64 {
        self.weights.iter().zip(zeta).map(|(w, z)| w * z * z).sum()
    }
}

/// Smallest eigenpair of the discrete operator on one grid.
#[derive(Debug, Clone)]
struct DiscreteGround {
    eigenvalue: f64,
    /// Symmetric-form eigenvector, unit Euclidean norm.
    y: Vec<f64>,
    residual: f64,
}

fn discrete_ground(fv: &FiniteVolume) -> Result<DiscreteGround> {
    let t = &fv.matrix;
    let (lo, hi) = t.eigenvalue_bracket(0)?;
    let (glo, ghi) = t.gershgorin();
    let scale = glo.abs().max(ghi.abs());
    let mut mu = lo - (1e-10 * lo.abs()).max(64.0 * f64::EPSILON * scale);
    let mut y = vec![1.0 / (t.len() as f64).sqrt(); t.len()];
    let mut eigenvalue = 0.5 * (lo + hi);
    let mut residual = f64::INFINITY;
    for _ in 0..50 {
        let next = match t.solve_shifted_spd(mu, &y) {
            Ok(v) => v,
            Err(_) => {
                // Rounding put the shift on the spectrum; step further down.
                mu -= 1e-8 * scale.max(1.0);
                continue;
            }
        };
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NonConvergence("inverse iteration produced a non-finite vector".into()));
        }
        y = next.into_iter().map(|v| v / norm).collect();
        let ty = t.apply(&y);
        eigenvalue = ty.iter().zip(&y).map(|(a, b)| a * b).sum();
        residual = ty.iter().zip(&y).map(|(a, b)| (a - eigenvalue * b).powi(2)).sum::<f64>().sqrt();
        if residual <= 64.0 * f64::EPSILON * scale.max(1.0) {
            break;
        }
    }
    if !(residual <= 1e-8 * scale.max(1.0)) {
        return Err(Error::NonConvergence(format!("inverse iteration residual {residual:.3e}")));
    }
    if y.iter().sum::<f64>() < 0.0 {
        y.iter_mut().for_each(|v| *v = -*v);
    }
    let peak = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(node) = y.iter().position(|&v| v < -1e-12 * peak) {
        return Err(Error::EigenvectorSignChange { node });
    }
    Ok(DiscreteGround { eigenvalue, y, residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub n: u32,
    /// Richardson-extrapolated smallest eigenvalue (the discrete value when
    /// no refinement partner exists).
    pub eigenvalue: f64,
    /// Smallest eigenvalue of the discrete operator on `grid`.
    pub discrete_eigenvalue: f64,
    pub sigma_sq: Option<f64>,
    pub grid: RadialGrid,
    /// Positive eigenfunction at the nodes, zero at `r_max`, unit radial L².
    pub chi: Vec<f64>,
    pub chi_l1: f64,
    pub chi_l2: f64,
    pub truncation_radius: f64,
    /// `‖(T - λ) y‖₂` for the unit symmetric-form eigenvector.
    pub eigen_residual: f64,
    /// `(node count, discrete eigenvalue)`, coarsest first.
    pub refinement_history: Vec<(usize, f64)>,
}

impl SpectralReport {
    pub fn sigma(&self) -> Option<f64> {
        self.sigma_sq.map(f64::sqrt)
    }
}

/// Smallest Dirichlet eigenpair of the linearized operator with Richardson
/// extrapolation against the same operator on a grid of half the resolution.
pub fn ground_state(op: &LinearizedOperator) -> Result<SpectralReport> {
    let fv = op.discretize();
    let fine = discrete_ground(&fv)?;
    let len = op.grid.len();
    let mut history = Vec::new();
    let mut eigenvalue = fine.eigenvalue;
    let coarse_len = (len - 1) / 2 + 1;
    if op.rebuildable() && coarse_len >= MIN_NODES {
        let coarse_op = op.on_grid(&op.grid.resampled(coarse_len)?)?;
        let coarse = discrete_ground(&coarse_op.discretize())?;
        // Outside the asymptotic range the correction would be noise.
        if (coarse.eigenvalue - fine.eigenvalue).abs() <= RICHARDSON_GATE * fine.eigenvalue.abs() {
            let h1 = 1.0 / (len - 1) as f64;
            let h2 = 1.0 / (coarse_len - 1) as f64;
            eigenvalue = (fine.eigenvalue * h2 * h2 - coarse.eigenvalue * h1 * h1) / (h2 * h2 - h1 * h1);
        }
        history.push((coarse_len, coarse.eigenvalue));
    }
    history.push((len, fine.eigenvalue));

    let mut chi: Vec<f64> = fine.y.iter().zip(&fv.weights).map(|(y, w)| y / w.sqrt()).collect();
    chi.push(0.0);
    let norm = radial_integral(&op.grid, op.n, &chi.iter().map(|c| c * c).collect::<Vec<_>>()).sqrt();
    chi.iter_mut().for_each(|c| *c /= norm);
    let chi_l2 = radial_integral(&op.grid, op.n, &chi.iter().map(|c| c * c).collect::<Vec<_>>()).sqrt();
    let chi_l1 = radial_integral(&op.grid, op.n, &chi.iter().map(|c| c.abs()).collect::<Vec<_>>());
    Ok(SpectralReport {
        n: op.n,
        eigenvalue,
        discrete_eigenvalue: fine.eigenvalue,
        sigma_sq: (eigenvalue < 0.0).then_some(-eigenvalue),
        grid: op.grid.clone(),
        chi,
        chi_l1,
        chi_l2,
        truncation_radius: op.grid.r_max(),
        eigen_residual: fine.residual,
        refinement_history: history,
    })
}

/// Number of negative Dirichlet eigenvalues of the discrete operator.
pub fn count_negative_modes(op: &LinearizedOperator) -> usize {
    op.discretize().matrix.count_below(0.0)
}

/// `ω ∫ (|ζ'|² + W ζ²) r^{n-1} dr` on `[0, r_max]` by composite Simpson,
/// halving until successive values agree to [`ENERGY_QUADRATURE_TOL`].
/// `zeta` returns `(ζ(r), ζ'(r))`.
pub fn energy_functional(op: &LinearizedOperator, zeta: impl Fn(f64) -> (f64, f64)) -> Result<f64> {
    let r_max = op.grid.r_max();
    let nm1 = op.n as i32 - 1;
    let integrand = |r: f64| -> Result<f64> {
        let (z, dz) = zeta(r);
        let w = op
            .potential_at(r)
            .ok_or_else(|| Error::NonIntegrable(format!("potential undefined at r = {r}")))?;
        Ok((dz * dz + w * z * z) * r.powi(nm1))
    };
    let mut intervals = 1024usize;
    let mut samples: Vec<f64> = (0..=intervals)
        .map(|i| integrand(r_max * i as f64 / intervals as f64))
        .collect::<Result<_>>()?;
    let mut previous = crate::grid::simpson(&samples, r_max / intervals as f64);
    while intervals < (1 << 24) {
        let doubled = intervals * 2;
        let mut next = Vec::with_capacity(doubled + 1);
        for (i, v) in samples.iter().enumerate() {
            next.push(*v);
            if i < intervals {
                next.push(integrand(r_max * (2 * i + 1) as f64 / doubled as f64)?);
            }
        }
        samples = next;
        intervals = doubled;
        let value = crate::grid::simpson(&samples, r_max / intervals as f64);
        if !value.is_finite() {
            return Err(Error::NonIntegrable("energy integrand is not finite".into()));
        }
        if (value - previous).abs() <= ENERGY_QUADRATURE_TOL * value.abs() || value == previous {
            return Ok(sphere_area(op.n) * value);
        }
        previous = value;
    }
    Err(Error::NonConvergence("energy quadrature did not settle".into()))
}

/// Discrete quadratic form `ω [Σ c (Δζ)² + Σ w W ζ²]` of node samples, with
/// `ζ(r_max)` replaced by the Dirichlet value 0.
pub fn discrete_energy(op: &LinearizedOperator, zeta: &[f64]) -> Result<f64> {
    op.grid.check_samples(zeta)?;
    Ok(sphere_area(op.n) * op.discretize().energy(zeta))
}

/// Discrete Rayleigh quotient; never below the smallest discrete eigenvalue.
pub fn rayleigh_quotient(op: &LinearizedOperator, zeta: &[f64]) -> Result<f64> {
    op.grid.check_samples(zeta)?;
    let fv = op.discretize();
    let mass = fv.mass(zeta);
    if !(mass > 0.0) {
        return Err(Error::invalid("Rayleigh quotient of a zero function"));
    }
    Ok(fv.energy(zeta) / mass)
}

/// `((n-2)/2)² < p Q(2/(p-1))`, the sufficient condition for a negative
/// eigenvalue of the linearization at a supercritical steady state.
pub fn negative_eigenvalue_condition(n: u32, p: f64) -> Result<bool> {
    let sob = sobolev_exponent(n).ok_or_else(|| Error::precondition("condition needs n > 2"))?;
    if p < sob * (1.0 - EXPONENT_TOL) {
        return Err(Error::precondition(format!("condition needs p ≥ {sob}, got {p}")));
    }
    Ok(hardy_constant(n)? < p * q_of_alpha(n, decay_exponent(p)))
}

/// Decay rate of the eigenfunction tail: minus the fitted slope of
/// `ln(r^{(n-1)/2} χ)` between the radius where `χ` falls below `10⁻³` of its
/// peak and `min(0.6 r_max, that radius + 10/σ)`.
pub fn tail_decay_rate(report: &SpectralReport) -> Result<f64> {
    let sigma = report.sigma().ok_or_else(|| Error::precondition("tail rate needs a negative eigenvalue"))?;
    let r = report.grid.nodes();
    let peak = report.chi.iter().fold(0.0_f64, |m, v| m.max(*v));
    let start = report
        .chi
        .iter()
        .position(|&c| c < 1e-3 * peak)
        .ok_or_else(|| Error::precondition("eigenfunction has no tail on this grid"))?;
    let r_a = r[start];
    let r_b = (r_a + 10.0 / sigma).min(0.6 * report.truncation_radius);
    let half = (report.n as f64 - 1.0) / 2.0;
    let (xs, ys): (Vec<f64>, Vec<f64>) = r
        .iter()
        .zip(&report.chi)
        .filter(|(&ri, &c)| ri >= r_a && ri <= r_b && c > 0.0)
        .map(|(&ri, &c)| (ri, (ri.powf(half) * c).ln()))
        .unzip();
    if xs.len() < 8 {
        return Err(Error::precondition("tail window holds too few nodes"));
    }
    Ok(-crate::fit::slope(&xs, &ys)?)
}

/// Truncation radius `60/σ` suggested by a pilot eigenvalue.
pub fn suggested_truncation(sigma_sq: f64) -> f64 {
    60.0 / sigma_sq.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Nonlinearity;
    use crate::steady::{critical_bubble, exp_steady_2d};
    use std::f64::consts::PI;

    #[test]
    fn free_laplacian_on_ball() {
        let grid = RadialGrid::uniform(10.0, 801).unwrap();
        let op = LinearizedOperator::schrodinger(3, Potential::Zero, &grid).unwrap();
        let rep = ground_state(&op).unwrap();
        let exact = (PI / 10.0).powi(2);
        assert!((rep.discrete_eigenvalue - exact).abs() < 1e-4 * exact);
        assert!((rep.eigenvalue - exact).abs() < 1e-7 * exact, "{}", rep.eigenvalue);
        assert!(rep.sigma_sq.is_none());
        assert_eq!(count_negative_modes(&op), 0);
    }

    #[test]
    fn free_laplacian_error_is_second_order() {
        let err = |nodes: usize| {
            let grid = RadialGrid::uniform(10.0, nodes).unwrap();
            let op = LinearizedOperator::schrodinger(3, Potential::Zero, &grid).unwrap();
            (ground_state(&op).unwrap().discrete_eigenvalue - (PI / 10.0).powi(2)).abs()
        };
        let ratio = err(201) / err(401);
        assert!(ratio > 3.8 && ratio < 4.2, "{ratio}");
    }

    #[test]
    fn effective_potentials() {
        let grid = RadialGrid::uniform(20.0, 201).unwrap();
        let spec = ProblemSpec::power(3, 5.0).unwrap();
        let op = build_linearized(&spec, &critical_bubble(3, 1.0, &grid).unwrap(), &grid).unwrap();
        for (&r, &w) in grid.nodes().iter().zip(op.effective_potential()) {
            let expect = -5.0 * (3f64.sqrt() / (1.0 + r * r)).powi(2);
            assert!((w - expect).abs() < 1e-13 * expect.abs().max(1e-300), "{r}");
        }
        let exp_spec = ProblemSpec::new(2, Nonlinearity::Exponential, 0.0, crate::problem::EquationKind::Heat).unwrap();
        let op = build_linearized(&exp_spec, &exp_steady_2d(1.0, &grid).unwrap(), &grid).unwrap();
        for (&r, &w) in grid.nodes().iter().zip(op.effective_potential()) {
            assert!((w + 32.0 / (4.0 + r * r).powi(2)).abs() < 1e-14);
        }
        let zero = SteadyStateProfile::zero(3, spec.nonlinearity, &grid).unwrap();
        let op = build_linearized(&spec, &zero, &grid).unwrap();
        assert!(op.effective_potential().iter().all(|&w| w == 0.0));
        assert!(build_linearized(&ProblemSpec::power(4, 3.0).unwrap(), &zero, &grid).is_err());
    }

    #[test]
    fn shell_volume_matches_direct_formula() {
        for n in 1..8 {
            let (a, b) = (0.3_f64, 1.7_f64);
            let direct = (b.powi(n as i32) - a.powi(n as i32)) / n as f64;
            assert!((shell_volume(a, b, n) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn condition_examples() {
        assert!(negative_eigenvalue_condition(3, 5.0).unwrap());
        assert!(!negative_eigenvalue_condition(13, 3.0).unwrap());
        assert!(negative_eigenvalue_condition(12, 3.5).unwrap());
        assert!(negative_eigenvalue_condition(5, 2.0).is_err());
        assert!(negative_eigenvalue_condition(2, 3.0).is_err());
    }

    #[test]
    fn energy_of_zero_is_zero() {
        let grid = RadialGrid::uniform(20.0, 201).unwrap();
        let spec = ProblemSpec::power(3, 5.0).unwrap();
        let op = build_linearized(&spec, &critical_bubble(3, 1.0, &grid).unwrap(), &grid).unwrap();
        assert_eq!(energy_functional(&op, |_| (0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn sampled_operator_is_not_extrapolated() {
        let grid = RadialGrid::uniform(10.0, 401).unwrap();
        let op = LinearizedOperator::from_samples(3, &grid, vec![0.0; 401]).unwrap();
        let rep = ground_state(&op).unwrap();
        assert_eq!(rep.eigenvalue, rep.discrete_eigenvalue);
        assert_eq!(rep.refinement_history.len(), 1);
        assert!(LinearizedOperator::from_samples(3, &grid, vec![0.0; 5]).is_err());
    }
}
