//! Radial method-of-lines evolution of perturbed steady states.
//!
//! Both schemes evolve the deviation `w = u - φ`, so an unperturbed steady
//! state is reproduced exactly and the reaction enters only through
//! `f(φ + w) - f(φ)`. Space is the finite-volume operator of
//! [`crate::spectrum`], so the ground state `χ` of a [`SpectralReport`] built on
//! the same grid is an exact eigenvector of the discrete linear dynamics.

mod heat;
mod operator;
mod wave;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{radial_inner, radial_integral, RadialGrid};
use crate::problem::{instability_coefficient, perturbation_pairing, Nonlinearity, ProblemSpec};
use crate::spectrum::SpectralReport;
use crate::steady::SteadyStateProfile;

pub use heat::evolve_heat;
pub use wave::evolve_wave;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reaction {
    /// `f(φ + w) - f(φ)`.
    Full,
    /// No reaction at all: the plain heat or wave equation for `w`.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionControls {
    pub output_interval: f64,
    pub dt_max: f64,
    /// Reaction steps obey `dt ≤ reaction_factor / max|f'(u)|` (heat) or
    /// `dt ≤ reaction_factor / √max|f'(u)|` (wave).
    pub reaction_factor: f64,
    pub cfl: f64,
    pub cap: f64,
    pub dt_floor: f64,
    /// Width of the wave absorbing layer as a fraction of `r_max`; zero
    /// disables it.
    pub sponge_fraction: f64,
    pub sponge_strength: f64,
    /// Largest tolerated share of the perturbation energy inside the layer.
    pub reflection_tol: Option<f64>,
    pub fit_window: Option<(f64, f64)>,
    pub reaction: Reaction,
    pub max_steps: usize,
}

impl Default for EvolutionControls {
    fn default() -> Self {
        Self {
            output_interval: 0.01,
            dt_max: 1e-2,
            reaction_factor: 0.2,
            cfl: 0.5,
            cap: 1e8,
            dt_floor: 1e-12,
            sponge_fraction: 0.1,
            sponge_strength: 5.0,
            reflection_tol: Some(0.1),
            fit_window: None,
            reaction: Reaction::Full,
            max_steps: 20_000_000,
        }
    }
}

impl EvolutionControls {
    /// The same controls with every step limit scaled by `factor`.
    pub fn refined(&self, factor: f64) -> Self {
        Self {
            dt_max: self.dt_max * factor,
            reaction_factor: self.reaction_factor * factor,
            cfl: self.cfl * factor,
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [self.output_interval, self.dt_max, self.reaction_factor, self.cfl, self.cap, self.dt_floor];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("evolution controls must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.sponge_fraction) || !(self.sponge_strength >= 0.0) {
            return Err(Error::invalid("sponge fraction must lie in [0, 1) with nonnegative strength"));
        }
        if let Some((lo, hi)) = self.fit_window {
            if !(lo < hi) {
                return Err(Error::invalid("fit window must satisfy t_lo < t_hi"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowUpCause {
    /// The amplitude crossed the cap after the step had already fallen below
    /// the floor.
    AmplitudeCap,
    /// The step fell below the floor after the amplitude had crossed the cap.
    StepCollapse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowUp {
    pub time_estimate: f64,
    pub cause: BlowUpCause,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub t: f64,
    pub u: Vec<f64>,
    pub ut: Option<Vec<f64>>,
    pub grid: RadialGrid,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub g: Vec<f64>,
    pub gprime: Vec<f64>,
    pub sup_norm: Vec<f64>,
    /// Present for the wave equation.
    pub energy_norm: Option<Vec<f64>>,
    pub blowup: Option<BlowUp>,
    pub fitted_rate: Option<f64>,
    /// Deviation `w` at the last recorded time.
    #[serde(skip)]
    pub final_w: Vec<f64>,
}

impl EvolutionTrace {
    fn push(&mut self, t: f64, g: f64, gprime: f64, sup: f64, energy: Option<f64>) {
        self.times.push(t);
        self.g.push(g);
        self.gprime.push(gprime);
        self.sup_norm.push(sup);
        if let (Some(e), Some(list)) = (energy, self.energy_norm.as_mut()) {
            list.push(e);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t,G,Gprime,sup_norm,energy_norm,flags`, 17
    /// significant digits. The flag column marks the blow-up sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,G,Gprime,sup_norm,energy_norm,flags\n");
        let last = self.times.len().saturating_sub(1);
        for i in 0..self.times.len() {
            let energy = self.energy_norm.as_ref().map_or_else(String::new, |e| format!("{:.16e}", e[i]));
            let flag = match (&self.blowup, i == last) {
                (Some(b), true) => match b.cause {
                    BlowUpCause::AmplitudeCap => "blowup_amplitude_cap",
                    BlowUpCause::StepCollapse => "blowup_step_collapse",
                },
                _ => "",
            };
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{energy},{flag}\n",
                self.times[i], self.g[i], self.gprime[i], self.sup_norm[i]
            ));
        }
        out
    }

    /// Last output time with `sup_norm ≤ limit`, the end of the regime where
    /// the linearization governs the run.
    pub fn linear_horizon(&self, limit: f64) -> Option<f64> {
        self.times.iter().zip(&self.sup_norm).take_while(|(_, s)| **s <= limit).last().map(|(t, _)| *t)
    }
}

/// `ω ∫ χ w r^{n-1} dr` by composite Simpson.
pub fn kaplan_g(chi: &[f64], w: &[f64], grid: &RadialGrid, n: u32) -> Result<f64> {
    grid.check_samples(chi)?;
    grid.check_samples(w)?;
    Ok(radial_inner(grid, n, chi, w))
}

/// `sup |u - φ|` and, when `ut` is present, `‖u - φ‖_{H¹} + ‖u_t‖_{L²}` with the
/// gradient term from the finite-volume Dirichlet form.
pub fn norms(state: &EvolutionState, profile: &SteadyStateProfile) -> Result<(f64, Option<f64>)> {
    if state.grid != *profile.grid() {
        return Err(Error::GridMismatch { expected: profile.grid().len(), found: state.grid.len() });
    }
    state.grid.check_samples(&state.u)?;
    let w: Vec<f64> = state.u.iter().zip(profile.phi()).map(|(u, p)| u - p).collect();
    let sup = w.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let energy = match &state.ut {
        None => None,
        Some(ut) => {
            state.grid.check_samples(ut)?;
            let diff = operator::Diffusion::new(profile.n(), crate::problem::Potential::Zero, &state.grid)?;
            Some(energy_norm(&diff, &state.grid, profile.n(), &w, ut))
        }
    };
    Ok((sup, energy))
}

fn energy_norm(diff: &operator::Diffusion, grid: &RadialGrid, n: u32, w: &[f64], ut: &[f64]) -> f64 {
    let sq = |v: &[f64]| radial_integral(grid, n, &v.iter().map(|x| x * x).collect::<Vec<_>>());
    (diff.gradient_sq(w) + sq(w)).sqrt() + sq(ut).sqrt()
}

/// Least-squares slope of `ln G` over the output times inside `window`.
pub fn growth_rate(trace: &EvolutionTrace, window: (f64, f64)) -> Result<f64> {
    let (ts, ls): (Vec<f64>, Vec<f64>) = trace
        .times
        .iter()
        .zip(&trace.g)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(&t, &g)| (t, g))
        .unzip();
    if ts.len() < 2 {
        return Err(Error::invalid(format!("fewer than two samples in window {window:?}")));
    }
    if let Some(g) = ls.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::precondition(format!("G must be positive in the fit window, found {g}")));
    }
    let logs: Vec<f64> = ls.iter().map(|g| g.ln()).collect();
    crate::fit::slope(&ts, &logs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TangentPlane {
    Above,
    On,
    Below,
}

/// Side of the tangent plane `σ∫χψ₀ + ∫χψ₁ = 0` on which the data lies. The
/// pairing counts as zero below `1e-12` of `σ|∫χψ₀| + |∫χψ₁|`.
pub fn tangent_plane_classifier(
    grid: &RadialGrid,
    n: u32,
    chi: &[f64],
    sigma_sq: f64,
    psi0: &[f64],
    psi1: &[f64],
) -> Result<(TangentPlane, f64)> {
    let pairing = perturbation_pairing(grid, n, chi, psi0, Some(psi1), 0.0, sigma_sq)?;
    let sigma = instability_coefficient(0.0, sigma_sq)?;
    let scale = sigma * radial_inner(grid, n, chi, psi0).abs() + radial_inner(grid, n, chi, psi1).abs();
    let side = if pairing.abs() <= 1e-12 * scale {
        TangentPlane::On
    } else if pairing > 0.0 {
        TangentPlane::Above
    } else {
        TangentPlane::Below
    };
    Ok((side, pairing))
}

/// Shared setup of both schemes.
struct Setup<'a> {
    n: u32,
    grid: &'a RadialGrid,
    phi: &'a [f64],
    nonlinearity: Nonlinearity,
    chi: &'a [f64],
    diffusion: operator::Diffusion,
    reaction: Reaction,
}

impl<'a> Setup<'a> {
    fn new(
        spec: &ProblemSpec,
        profile: &'a SteadyStateProfile,
        ground: &'a SpectralReport,
        controls: &EvolutionControls,
        t_max: f64,
    ) -> Result<Self> {
        controls.validate()?;
        if !profile.is_compatible(spec) {
            return Err(Error::precondition("profile does not match the problem spec"));
        }
        if ground.grid != *profile.grid() {
            return Err(Error::GridMismatch { expected: profile.grid().len(), found: ground.grid.len() });
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::invalid("final time must be positive"));
        }
        let grid = profile.grid();
        Ok(Self {
            n: spec.n,
            grid,
            phi: profile.phi(),
            nonlinearity: spec.nonlinearity,
            chi: &ground.chi,
            diffusion: operator::Diffusion::new(spec.n, spec.potential(), grid)?,
            reaction: controls.reaction,
        })
    }

    fn unknowns(&self) -> usize {
        self.diffusion.unknowns()
    }

    fn reaction(&self, i: usize, w: f64) -> f64 {
        match self.reaction {
            Reaction::Full => self.nonlinearity.f(self.phi[i] + w) - self.nonlinearity.f(self.phi[i]),
            Reaction::Off => 0.0,
        }
    }

    fn max_df(&self, w: &[f64]) -> f64 {
        match self.reaction {
            Reaction::Full => (0..self.unknowns()).fold(0.0_f64, |m, i| m.max(self.nonlinearity.df(self.phi[i] + w[i]).abs())),
            Reaction::Off => 0.0,
        }
    }

    fn g(&self, w: &[f64]) -> f64 {
        radial_inner(self.grid, self.n, self.chi, w)
    }

    /// `-L w + f(φ + w) - f(φ)`.
    fn heat_rhs(&self, w: &[f64]) -> Vec<f64> {
        let mut out = self.diffusion.apply(w);
        for (i, v) in out.iter_mut().enumerate().take(self.unknowns()) {
            *v = self.reaction(i, w[i]) - *v;
        }
        out
    }

    fn check_initial(&self, psi: &[f64]) -> Result<()> {
        self.grid.check_samples(psi)?;
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial perturbation must be finite"));
        }
        Ok(())
    }
}

fn sup(w: &[f64]) -> f64 {
    if w.iter().any(|v| v.is_nan()) {
        return f64::NAN;
    }
    w.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Step towards `target`: the whole remainder when it fits, half of it when a
/// sliver would be left over.
fn step_towards(t: f64, target: f64, proposed: f64) -> (f64, bool) {
    let remaining = target - t;
    if remaining <= proposed {
        (remaining, true)
    } else if remaining < 2.0 * proposed {
        (0.5 * remaining, false)
    } else {
        (proposed, false)
    }
}

/// Distinguishes the step collapse of a blow-up, where the amplitude keeps
/// growing, from a solver fault.
#[derive(Debug, Default)]
struct CollapseWatch {
    floored_steps: usize,
    reference: f64,
}

impl CollapseWatch {
    const WINDOW: usize = 100;
    const GROWTH: f64 = 1.01;

    fn check(&mut self, t: f64, dt: f64, amplitude: f64, controls: &EvolutionControls) -> Result<()> {
        if dt >= controls.dt_floor {
            self.floored_steps = 0;
            return Ok(());
        }
        if self.floored_steps == 0 {
            self.reference = amplitude;
        }
        self.floored_steps += 1;
        if self.floored_steps > Self::WINDOW {
            if !(amplitude >= Self::GROWTH * self.reference) {
                return Err(Error::StepCollapse { t, dt, sup: amplitude });
            }
            self.floored_steps = 1;
            self.reference = amplitude;
        }
        Ok(())
    }
}

/// Shared blow-up bookkeeping: tracks when the cap and the floor were first
/// crossed.
#[derive(Debug, Default)]
struct Detector {
    capped: bool,
    floored: bool,
}

impl Detector {
    /// Updates with the current amplitude and proposed step; returns the
    /// cause once both conditions hold.
    fn update(&mut self, controls: &EvolutionControls, sup: f64, dt: f64) -> Option<BlowUpCause> {
        let capped = sup > controls.cap;
        let floored = dt < controls.dt_floor;
        let cause = match (capped, floored) {
            (true, true) if self.capped && !self.floored => Some(BlowUpCause::StepCollapse),
            (true, true) => Some(BlowUpCause::AmplitudeCap),
            _ => None,
        };
        self.capped = capped;
        self.floored = floored;
        cause
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64) -> EvolutionTrace {
        let times: Vec<f64> = (0..=300).map(|i| i as f64 * 0.01).collect();
        EvolutionTrace {
            g: times.iter().map(|&t| f(t)).collect(),
            gprime: vec![0.0; times.len()],
            sup_norm: vec![0.0; times.len()],
            times,
            ..Default::default()
        }
    }

    #[test]
    fn growth_rate_of_exponentials() {
        let exact = synthetic(|t| (2.0 * t).exp());
        assert!((growth_rate(&exact, (0.0, 3.0)).unwrap() - 2.0).abs() < 1e-10);
        let wobbly = synthetic(|t| (2.0 * t).exp() * (1.0 + 0.01 * t.sin()));
        assert!((growth_rate(&wobbly, (0.0, 3.0)).unwrap() - 2.0).abs() < 0.02);
        let negative = synthetic(|t| t - 1.0);
        assert!(growth_rate(&negative, (0.0, 3.0)).is_err());
        assert!(growth_rate(&exact, (5.0, 6.0)).is_err());
    }

    #[test]
    fn detector_causes() {
        let c = EvolutionControls::default();
        let mut d = Detector::default();
        assert_eq!(d.update(&c, 1e9, 1e-6), None);
        assert_eq!(d.update(&c, 1e9, 1e-13), Some(BlowUpCause::StepCollapse));
        let mut d = Detector::default();
        assert_eq!(d.update(&c, 10.0, 1e-13), None);
        assert_eq!(d.update(&c, 1e9, 1e-14), Some(BlowUpCause::AmplitudeCap));
    }

    #[test]
    fn csv_layout() {
        let mut trace = synthetic(|t| t);
        trace.times.truncate(2);
        trace.g.truncate(2);
        trace.gprime.truncate(2);
        trace.sup_norm.truncate(2);
        trace.blowup = Some(BlowUp { time_estimate: 0.01, cause: BlowUpCause::StepCollapse });
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,G,Gprime,sup_norm,energy_norm,flags");
        assert_eq!(lines[1], "0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0,,");
        assert!(lines[2].ends_with(",,blowup_step_collapse"));
    }
}
