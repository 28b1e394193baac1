//! Shooting from the origin for `φ'' + (n-1)φ'/r - Vφ + |φ|^p = 0`.

use serde::{Deserialize, Serialize};

use super::{relative_residual, Family, SteadyStateProfile};
use crate::error::{Error, Result};
use crate::fit::least_squares;
use crate::grid::RadialGrid;
use crate::ode::{Advance, Dopri5};
use crate::problem::{sobolev_exponent, Nonlinearity, Potential, ProblemSpec};
use crate::spectrum::{ef_characteristic_roots, CharacteristicRoots};

/// Series start radius for a profile of unit core scale.
pub const SERIES_START: f64 = 1e-4;
pub const DEFAULT_SHOOT_RTOL: f64 = 1e-10;

const BISECTION_BUDGET: usize = 200;
/// Relative agreement between the bracketing trajectories that marks the
/// trusted part of a potential-case profile.
const AGREEMENT: f64 = 1e-6;

fn series_start(alpha: f64, p: f64) -> f64 {
    SERIES_START * alpha.powf(-(p - 1.0) / 2.0).min(1.0)
}

/// Fourth-order Taylor start `φ = α + c₂r² + c₄r⁴` for
/// `φ'' + (n-1)φ'/r = Vφ - φ^p` with `V` frozen at the origin.
fn series(n: u32, p: f64, v0: f64, alpha: f64, r: f64) -> [f64; 2] {
    let nf = n as f64;
    let g = v0 * alpha - alpha.powf(p);
    let c2 = g / (2.0 * nf);
    let dg = v0 - p * alpha.powf(p - 1.0);
    let c4 = dg * c2 / (4.0 * (nf + 2.0));
    [alpha + c2 * r * r + c4 * r.powi(4), 2.0 * c2 * r + 4.0 * c4 * r.powi(3)]
}

fn rhs(n: u32, p: f64, potential: Potential) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] {
    let nm1 = n as f64 - 1.0;
    move |r, y| [y[1], -nm1 / r * y[1] + potential.eval(r) * y[0] - y[0].abs().powf(p)]
}

/// Integrates `-Δφ = φ^p` with `φ(0) = α` across the grid and fits the tail
/// constant `lim r² φ^{p-1}`. `tol` bounds the relative drift between tail
/// fits on two windows.
pub fn shoot_supercritical(n: u32, p: f64, alpha: f64, grid: &RadialGrid, tol: f64) -> Result<SteadyStateProfile> {
    ProblemSpec::power(n, p)?.require_supercritical()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("central value must be positive, got {alpha}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tail tolerance must be positive"));
    }
    let r0 = series_start(alpha, p);
    let f = rhs(n, p, Potential::Zero);
    let mut ode = Dopri5::new(r0, series(n, p, 0.0, alpha, r0), DEFAULT_SHOOT_RTOL, alpha * 1e-300);
    let mut phi = Vec::with_capacity(grid.len());
    let mut dphi = Vec::with_capacity(grid.len());
    for &r in grid.nodes() {
        let y = if r <= r0 {
            series(n, p, 0.0, alpha, r)
        } else {
            let mut crossed = None;
            ode.advance(&f, r, |t, y, _| {
                let hit = y[0] <= 0.0;
                if hit {
                    crossed = Some(t);
                }
                hit
            })?;
            if let Some(r) = crossed {
                return Err(Error::ZeroCrossing { r });
            }
            *ode.y()
        };
        phi.push(y[0]);
        dphi.push(y[1]);
    }
    let c = tail_constant(n, p, grid, &phi, 0.1, 1.0)?;
    let check = tail_constant(n, p, grid, &phi, 1.0 / 3.0, 1.0)?;
    let drift = ((c - check) / c).abs();
    if !(drift <= tol) {
        return Err(Error::TailNotConverged { drift, tol });
    }
    Ok(SteadyStateProfile::from_parts(
        n,
        grid.clone(),
        phi,
        dphi,
        Family::ShootSupercritical { alpha },
        Nonlinearity::Power { p },
        Some(c),
    ))
}

/// Least-squares limit of `r² φ^{p-1}` over `[lo·r_max, hi·r_max]`. The
/// correction terms are the two linearized modes of the Emden–Fowler
/// equilibrium: `r^{μ₁}, r^{μ₂}` for real roots, `r^{Re μ}` times a
/// log-periodic pair otherwise.
fn tail_constant(n: u32, p: f64, grid: &RadialGrid, phi: &[f64], lo: f64, hi: f64) -> Result<f64> {
    let r_max = grid.r_max();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&r, &v) in grid.nodes().iter().zip(phi) {
        if r >= lo * r_max && r <= hi * r_max {
            xs.push(r / r_max);
            ys.push(r * r * v.powf(p - 1.0));
        }
    }
    if xs.len() < 8 {
        return Err(Error::precondition("too few nodes in the tail window"));
    }
    let mode = |mu: f64| xs.iter().map(|x| x.powf(mu)).collect::<Vec<f64>>();
    let cols = match ef_characteristic_roots(n, p) {
        CharacteristicRoots::Real { low, high } if high - low > 1e-3 => vec![vec![1.0; xs.len()], mode(high), mode(low)],
        CharacteristicRoots::Real { high, .. } => vec![vec![1.0; xs.len()], mode(high)],
        CharacteristicRoots::Complex { re, im } => {
            let m = mode(re);
            vec![
                vec![1.0; xs.len()],
                m.iter().zip(&xs).map(|(d, x)| d * (im * x.ln()).cos()).collect(),
                m.iter().zip(&xs).map(|(d, x)| d * (im * x.ln()).sin()).collect(),
            ]
        }
    };
    Ok(least_squares(&cols, &ys)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShotOutcome {
    /// `φ` reaches zero: the central value is too large.
    CrossesZero { r: f64 },
    /// `φ'` stops decreasing while `φ > 0`: the central value is too small.
    TurnsUp { r: f64 },
    /// Neither event before the horizon.
    Undecided,
}

impl ShotOutcome {
    fn same_side(&self, other: &ShotOutcome) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }
}

/// Result of the potential-case bisection.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialShot {
    pub profile: SteadyStateProfile,
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub iterations: usize,
    /// Radius up to which the bracketing trajectories agree; the profile is
    /// continued beyond it along the decaying branch.
    pub r_cut: f64,
}

fn potential_trajectory(
    n: u32,
    p: f64,
    potential: Potential,
    alpha: f64,
    nodes: &[f64],
    horizon: f64,
) -> Result<(Vec<[f64; 2]>, ShotOutcome)> {
    let r0 = series_start(alpha, p);
    let v0 = potential.eval(0.0);
    let f = rhs(n, p, potential);
    let mut ode = Dopri5::new(r0, series(n, p, v0, alpha, r0), DEFAULT_SHOOT_RTOL, alpha * 1e-300);
    let mut samples = Vec::with_capacity(nodes.len());
    let mut event = None;
    let mut watch = |t: f64, y: &[f64; 2], _: f64| {
        if y[0] <= 0.0 {
            event = Some(ShotOutcome::CrossesZero { r: t });
        } else if y[1] >= 0.0 {
            event = Some(ShotOutcome::TurnsUp { r: t });
        }
        event.is_some()
    };
    for &r in nodes {
        if r <= r0 {
            samples.push(series(n, p, v0, alpha, r));
            continue;
        }
        if ode.advance(&f, r, &mut watch)? == Advance::Stopped {
            return Ok((samples, event.unwrap()));
        }
        samples.push(*ode.y());
    }
    if ode.advance(&f, horizon, &mut watch)? == Advance::Stopped {
        return Ok((samples, event.unwrap()));
    }
    Ok((samples, ShotOutcome::Undecided))
}

/// Classifies a single shot from `φ(0) = α`.
pub fn potential_shot_outcome(n: u32, p: f64, potential: Potential, alpha: f64, horizon: f64) -> Result<ShotOutcome> {
    Ok(potential_trajectory(n, p, potential, alpha, &[], horizon)?.1)
}

/// Ground state of `-Δφ + Vφ = φ^p` by bisection on `α = φ(0)` inside
/// `bracket`. `tol` bounds the relative residual on uniform grids.
pub fn shoot_with_potential(
    n: u32,
    p: f64,
    potential: Potential,
    grid: &RadialGrid,
    bracket: (f64, f64),
    tol: f64,
) -> Result<PotentialShot> {
    let sob = sobolev_exponent(n).ok_or_else(|| Error::precondition("potential shooting needs n > 2"))?;
    if !(p > 1.0 && p < sob) {
        return Err(Error::precondition(format!("potential shooting needs 1 < p < {sob}, got {p}")));
    }
    if grid.nodes().iter().any(|&r| !(potential.eval(r) > 0.0 && potential.eval(r).is_finite())) {
        return Err(Error::precondition("potential must be positive and bounded on the grid"));
    }
    let (mut lo, mut hi) = (bracket.0.min(bracket.1), bracket.0.max(bracket.1));
    if !(lo > 0.0 && hi.is_finite() && lo < hi) {
        return Err(Error::invalid(format!("bad bracket ({}, {})", bracket.0, bracket.1)));
    }
    let horizon = 4.0 * grid.r_max();
    let nodes = grid.nodes();
    let (mut traj_lo, out_lo) = potential_trajectory(n, p, potential, lo, nodes, horizon)?;
    let (mut traj_hi, out_hi) = potential_trajectory(n, p, potential, hi, nodes, horizon)?;
    let low_side = out_lo;
    if out_lo.same_side(&out_hi) || matches!(out_lo, ShotOutcome::Undecided) || matches!(out_hi, ShotOutcome::Undecided) {
        return Err(Error::BracketFailure { lo, hi });
    }
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if iterations == BISECTION_BUDGET {
            return Err(Error::NonConvergence(format!("bisection budget exhausted on [{lo}, {hi}]")));
        }
        iterations += 1;
        let (traj, out) = potential_trajectory(n, p, potential, mid, nodes, horizon)?;
        match out {
            ShotOutcome::Undecided => {
                (lo, hi) = (mid, mid);
                traj_lo = traj.clone();
                traj_hi = traj;
                break;
            }
            _ if out.same_side(&low_side) => {
                lo = mid;
                traj_lo = traj;
            }
            _ => {
                hi = mid;
                traj_hi = traj;
            }
        }
    }

    let agree = traj_lo
        .iter()
        .zip(&traj_hi)
        .take_while(|(a, b)| a[0] > 0.0 && (a[0] - b[0]).abs() <= AGREEMENT * a[0])
        .count();
    if agree < 2 {
        return Err(Error::NonConvergence("bracketing trajectories never agree".into()));
    }
    let cut = agree - 1;
    let mut phi: Vec<f64> = traj_lo[..=cut].iter().map(|y| y[0]).collect();
    let mut dphi: Vec<f64> = traj_lo[..=cut].iter().map(|y| y[1]).collect();
    if cut + 1 < nodes.len() {
        let (tail_phi, tail_dphi) = decaying_tail(n, potential, &nodes[cut..], phi[cut])?;
        phi.extend_from_slice(&tail_phi[1..]);
        dphi.extend_from_slice(&tail_dphi[1..]);
    }
    if phi.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NonConvergence("potential-case profile is not positive".into()));
    }
    let alpha = 0.5 * (lo + hi);
    let nl = Nonlinearity::PowerWithPotential { p, potential };
    let profile = SteadyStateProfile::from_parts(
        n,
        grid.clone(),
        phi,
        dphi,
        Family::ShootPotential { alpha, potential },
        nl,
        None,
    );
    if grid.is_uniform() {
        let spec = ProblemSpec::new(n, nl, 0.0, crate::problem::EquationKind::Heat)?;
        let res = relative_residual(&profile, &spec)?;
        if !(res <= tol) {
            return Err(Error::NonConvergence(format!("relative residual {res:.3e} exceeds {tol:.3e}")));
        }
    }
    Ok(PotentialShot { profile, alpha_low: lo, alpha_high: hi, iterations, r_cut: nodes[cut] })
}

/// Continues a positive solution of the linear tail equation `-Δφ + Vφ = 0`
/// from `nodes[0]` outwards along its decaying branch. The logarithmic
/// derivative `q = φ'/φ` obeys `q' = V - (n-1)q/r - q²` and is integrated
/// inwards, where the decaying branch is attracting.
fn decaying_tail(n: u32, potential: Potential, nodes: &[f64], phi0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let nm1 = n as f64 - 1.0;
    let r_end = *nodes.last().unwrap();
    let q_end = -potential.eval(r_end).sqrt() - nm1 / (2.0 * r_end);
    let f = move |r: f64, y: &[f64; 2]| [potential.eval(r) - nm1 * y[0] / r - y[0] * y[0], y[0]];
    let mut ode = Dopri5::new(r_end, [q_end, 0.0], 1e-12, 1e-14);
    let mut q = vec![0.0; nodes.len()];
    let mut log_phi = vec![0.0; nodes.len()];
    for i in (0..nodes.len()).rev() {
        ode.advance(f, nodes[i], |_, _, _| false)?;
        q[i] = ode.y()[0];
        log_phi[i] = ode.y()[1];
    }
    let phi: Vec<f64> = log_phi.iter().map(|l| phi0 * (l - log_phi[0]).exp()).collect();
    let dphi = phi.iter().zip(&q).map(|(v, q)| v * q).collect();
    Ok((phi, dphi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::q_of_alpha;
    use crate::steady::verify_pointwise_bound;

    #[test]
    fn tail_constants_for_n13() {
        let grid = RadialGrid::uniform(100.0, 4096).unwrap();
        for (p, q) in [(3.0, q_of_alpha(13, 1.0)), (2.0, q_of_alpha(13, 2.0))] {
            let prof = shoot_supercritical(13, p, 1.0, &grid, 1e-3).unwrap();
            let c = prof.asymptotic_constant().unwrap();
            assert!((c / q - 1.0).abs() < 0.01, "p = {p}: {c} vs {q}");
            let r = grid.r_max();
            let raw = r * r * prof.phi()[grid.len() - 1].powf(p - 1.0);
            assert!((raw / q - 1.0).abs() < 0.01, "raw {raw}");
            assert!(prof.phi().windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn bound_holds_for_n13_p3() {
        let grid = RadialGrid::uniform(100.0, 4096).unwrap();
        let prof = shoot_supercritical(13, 3.0, 1.0, &grid, 1e-3).unwrap();
        assert!(verify_pointwise_bound(&prof, 3.0, 1e-9).unwrap());
    }

    #[test]
    fn rejects_subcritical_exponent() {
        let grid = RadialGrid::uniform(10.0, 64).unwrap();
        assert!(shoot_supercritical(5, 2.0, 1.0, &grid, 1e-3).is_err());
        assert!(shoot_supercritical(2, 5.0, 1.0, &grid, 1e-3).is_err());
        assert!(shoot_supercritical(5, 3.0, -1.0, &grid, 1e-3).is_err());
    }

    #[test]
    fn scaling_covariance() {
        let (n, p, alpha) = (13u32, 3.0_f64, 4.0_f64);
        let s = alpha.powf((p - 1.0) / 2.0);
        let grid = RadialGrid::uniform(25.0, 2048).unwrap();
        let scaled = RadialGrid::uniform(25.0 * s, 2048).unwrap();
        let a = shoot_supercritical(n, p, alpha, &grid, 1.0).unwrap();
        let one = shoot_supercritical(n, p, 1.0, &scaled, 1.0).unwrap();
        for (x, y) in a.phi().iter().zip(one.phi()) {
            assert!((x - alpha * y).abs() <= 1e-8 * x.abs(), "{x} {}", alpha * y);
        }
    }

    #[test]
    fn small_and_large_central_values_bracket() {
        let v = Potential::Constant { value: 1.0 };
        assert!(matches!(potential_shot_outcome(3, 3.0, v, 1.0, 50.0).unwrap(), ShotOutcome::TurnsUp { .. }));
        assert!(matches!(potential_shot_outcome(3, 3.0, v, 10.0, 50.0).unwrap(), ShotOutcome::CrossesZero { .. }));
    }

    #[test]
    fn bracket_without_sign_change_fails() {
        let grid = RadialGrid::uniform(20.0, 512).unwrap();
        let v = Potential::Constant { value: 1.0 };
        let err = shoot_with_potential(3, 3.0, v, &grid, (0.5, 1.0), 1e-6).unwrap_err();
        assert!(matches!(err, Error::BracketFailure { .. }), "{err:?}");
        assert!(shoot_with_potential(3, 6.0, v, &grid, (0.5, 10.0), 1e-6).is_err());
        let neg = Potential::Constant { value: -1.0 };
        assert!(shoot_with_potential(3, 3.0, neg, &grid, (0.5, 10.0), 1e-6).is_err());
    }
}
