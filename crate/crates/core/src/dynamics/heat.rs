//! `w_t = -L w + f(φ + w) - f(φ)` by Strang splitting: pointwise RK4 for the
//! reaction half steps around an L-stable TR-BDF2 diffusion step.

use super::{step_towards, CollapseWatch, growth_rate, sup, Detector, EvolutionControls, EvolutionTrace, Setup};
use crate::error::{Error, Result};
use crate::problem::{EquationKind, ProblemSpec};
use crate::spectrum::SpectralReport;
use crate::steady::SteadyStateProfile;

pub fn evolve_heat(
    spec: &ProblemSpec,
    profile: &SteadyStateProfile,
    ground: &SpectralReport,
    psi0: &[f64],
    t_max: f64,
    controls: &EvolutionControls,
) -> Result<EvolutionTrace> {
    if spec.equation != EquationKind::Heat {
        return Err(Error::precondition("evolve_heat needs a heat-equation spec"));
    }
    let setup = Setup::new(spec, profile, ground, controls, t_max)?;
    setup.check_initial(psi0)?;
    let m = setup.unknowns();
    let mut w = psi0.to_vec();
    w[m] = 0.0;

    let mut trace = EvolutionTrace::default();
    let record = |trace: &mut EvolutionTrace, t: f64, w: &[f64]| {
        let g = setup.g(w);
        let gp = setup.g(&setup.heat_rhs(w));
        if trace.times.last().is_some_and(|&last| t <= last) {
            for list in [&mut trace.times, &mut trace.g, &mut trace.gprime, &mut trace.sup_norm] {
                list.pop();
            }
        }
        trace.push(t, g, gp, sup(w), None);
    };
    record(&mut trace, 0.0, &w);

    let mut t = 0.0;
    let mut next_output = 1usize;
    let mut detector = Detector::default();
    let mut watch = CollapseWatch::default();
    let mut steps = 0usize;
    loop {
        let max_df = setup.max_df(&w);
        let proposed = if max_df > 0.0 { controls.dt_max.min(controls.reaction_factor / max_df) } else { controls.dt_max };
        let amplitude = sup(&w);
        if !amplitude.is_finite() {
            if detector.capped {
                trace.blowup = Some(super::BlowUp { time_estimate: t, cause: super::BlowUpCause::AmplitudeCap });
                break;
            }
            return Err(Error::StepCollapse { t, dt: proposed, sup: amplitude });
        }
        if let Some(cause) = detector.update(controls, amplitude, proposed) {
            record(&mut trace, t, &w);
            trace.blowup = Some(super::BlowUp { time_estimate: t, cause });
            break;
        }
        watch.check(t, proposed, amplitude, controls)?;
        let target = (next_output as f64 * controls.output_interval).min(t_max);
        let (dt, reaches) = step_towards(t, target, proposed);
        step(&setup, &mut w, dt)?;
        if reaches {
            t = target;
            record(&mut trace, t, &w);
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

fn step(setup: &Setup, w: &mut [f64], dt: f64) -> Result<()> {
    react(setup, w, 0.5 * dt);
    diffuse(setup, w, dt)?;
    react(setup, w, 0.5 * dt);
    Ok(())
}

fn react(setup: &Setup, w: &mut [f64], h: f64) {
    for (i, wi) in w.iter_mut().enumerate().take(setup.unknowns()) {
        let f = |v: f64| setup.reaction(i, v);
        let k1 = f(*wi);
        let k2 = f(*wi + 0.5 * h * k1);
        let k3 = f(*wi + 0.5 * h * k2);
        let k4 = f(*wi + h * k3);
        *wi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
}

fn diffuse(setup: &Setup, w: &mut [f64], h: f64) -> Result<()> {
    let gamma = 2.0 - std::f64::consts::SQRT_2;
    let d = &setup.diffusion;
    let lw = d.apply(w);
    let rhs: Vec<f64> = w.iter().zip(&lw).map(|(a, b)| a - 0.5 * gamma * h * b).collect();
    let stage = d.solve_implicit(0.5 * gamma * h, &rhs)?;
    let denom = gamma * (2.0 - gamma);
    let rhs: Vec<f64> =
        stage.iter().zip(w.iter()).map(|(s, v)| s / denom - (1.0 - gamma).powi(2) / denom * v).collect();
    let next = d.solve_implicit((1.0 - gamma) / (2.0 - gamma) * h, &rhs)?;
    w.copy_from_slice(&next);
    Ok(())
}
