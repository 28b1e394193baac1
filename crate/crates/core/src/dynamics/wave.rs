//! `w_tt + a w_t = -L w + f(φ + w) - f(φ)` by velocity Verlet, with the
//! damping (and the absorbing layer) applied exactly in half steps around it.

use super::{step_towards, CollapseWatch, energy_norm, growth_rate, sup, Detector, EvolutionControls, EvolutionTrace, Setup};
use crate::error::{Error, Result};
use crate::grid::sphere_area;
use crate::problem::{EquationKind, ProblemSpec};
use crate::spectrum::SpectralReport;
use crate::steady::SteadyStateProfile;

pub fn evolve_wave(
    spec: &ProblemSpec,
    profile: &SteadyStateProfile,
    ground: &SpectralReport,
    psi0: &[f64],
    psi1: &[f64],
    t_max: f64,
    controls: &EvolutionControls,
) -> Result<EvolutionTrace> {
    if spec.equation != EquationKind::Wave {
        return Err(Error::precondition("evolve_wave needs a wave-equation spec"));
    }
    let setup = Setup::new(spec, profile, ground, controls, t_max)?;
    setup.check_initial(psi0)?;
    setup.check_initial(psi1)?;
    let m = setup.unknowns();
    let (mut w, mut v) = (psi0.to_vec(), psi1.to_vec());
    w[m] = 0.0;
    v[m] = 0.0;

    let r = setup.grid.nodes();
    let r_max = setup.grid.r_max();
    let r_sponge = (1.0 - controls.sponge_fraction) * r_max;
    let sponge: Vec<f64> = r
        .iter()
        .map(|&ri| {
            if controls.sponge_fraction > 0.0 && ri > r_sponge {
                controls.sponge_strength * ((ri - r_sponge) / (r_max - r_sponge)).powi(2)
            } else {
                0.0
            }
        })
        .collect();
    let linear_dt = (controls.cfl * setup.grid.min_spacing()).min(0.9 * 2.0 / setup.diffusion.spectral_radius().sqrt());

    let mut trace = EvolutionTrace { energy_norm: Some(Vec::new()), ..Default::default() };
    let record = |trace: &mut EvolutionTrace, t: f64, w: &[f64], v: &[f64]| {
        if trace.times.last().is_some_and(|&last| t <= last) {
            for list in [&mut trace.times, &mut trace.g, &mut trace.gprime, &mut trace.sup_norm] {
                list.pop();
            }
            trace.energy_norm.as_mut().map(Vec::pop);
        }
        let e = energy_norm(&setup.diffusion, setup.grid, setup.n, w, v);
        trace.push(t, setup.g(w), setup.g(v), sup(w), Some(e));
    };
    record(&mut trace, 0.0, &w, &v);

    let force = |w: &[f64]| setup.heat_rhs(w);
    let mut acc = force(&w);
    let mut t = 0.0;
    let mut next_output = 1usize;
    let mut detector = Detector::default();
    let mut watch = CollapseWatch::default();
    let mut steps = 0usize;
    loop {
        let max_df = setup.max_df(&w);
        let mut proposed = controls.dt_max.min(linear_dt);
        if max_df > 0.0 {
            proposed = proposed.min(controls.reaction_factor / max_df.sqrt());
        }
        let amplitude = sup(&w);
        if !amplitude.is_finite() {
            if detector.capped {
                trace.blowup = Some(super::BlowUp { time_estimate: t, cause: super::BlowUpCause::AmplitudeCap });
                break;
            }
            return Err(Error::StepCollapse { t, dt: proposed, sup: amplitude });
        }
        if let Some(cause) = detector.update(controls, amplitude, proposed) {
            record(&mut trace, t, &w, &v);
            trace.blowup = Some(super::BlowUp { time_estimate: t, cause });
            break;
        }
        watch.check(t, proposed, amplitude, controls)?;
        let target = (next_output as f64 * controls.output_interval).min(t_max);
        let (dt, reaches) = step_towards(t, target, proposed);

        for i in 0..m {
            let decay = (-(spec.damping + sponge[i]) * 0.5 * dt).exp();
            v[i] = decay * v[i] + 0.5 * dt * acc[i];
            w[i] += dt * v[i];
        }
        acc = force(&w);
        for i in 0..m {
            let decay = (-(spec.damping + sponge[i]) * 0.5 * dt).exp();
            v[i] = decay * (v[i] + 0.5 * dt * acc[i]);
        }

        if reaches {
            t = target;
            record(&mut trace, t, &w, &v);
            if let Some(tol) = controls.reflection_tol {
                let fraction = layer_fraction(&setup, &w, &v, r_sponge);
                if fraction > tol {
                    return Err(Error::ReflectionContamination { t, fraction });
                }
            }
            next_output += 1;
            if t >= t_max {
                break;
            }
        } else {
            t += dt;
        }
        steps += 1;
        if steps >= controls.max_steps {
            return Err(Error::NonConvergence(format!("step budget exhausted at t = {t}")));
        }
    }
    trace.final_w = w;
    trace.fitted_rate = controls.fit_window.and_then(|win| growth_rate(&trace, win).ok());
    Ok(trace)
}

/// Share of the perturbation energy `∫ w_t² + |∇w|² + w²` held beyond
/// `r_sponge`.
fn layer_fraction(setup: &Setup, w: &[f64], v: &[f64], r_sponge: f64) -> f64 {
    let omega = sphere_area(setup.n);
    let grad = setup.diffusion.gradient_terms(w);
    let r = setup.grid.nodes();
    let (mut inside, mut total) = (0.0, 0.0);
    for (i, weight) in setup.diffusion.weights().iter().enumerate() {
        let e = omega * weight * (v[i] * v[i] + w[i] * w[i]) + grad[i];
        total += e;
        if r[i] > r_sponge {
            inside += e;
        }
    }
    if total > 0.0 {
        inside / total
    } else {
        0.0
    }
}
