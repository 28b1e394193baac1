//! Pipelines behind each subcommand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use instablab::dynamics::{
    evolve_heat, evolve_wave, growth_rate, tangent_plane_classifier, EvolutionControls, EvolutionTrace, Reaction,
};
use instablab::odelemmas::{
    characteristic_roots, ode1_lower_bound, ode2_blowup, ode2_energy_bound, verify_ode1, ComparisonProblem, Forcing,
    Ode2Controls,
};
use instablab::problem::{instability_coefficient, perturbation_pairing, sobolev_exponent};
use instablab::spectrum::{
    build_linearized, count_negative_modes, ground_state, negative_eigenvalue_condition, suggested_truncation,
    tail_decay_rate, SpectralReport,
};
use instablab::steady::{critical_bubble, exp_steady_2d, relative_residual, shoot_supercritical, shoot_with_potential, SteadyStateProfile};
use instablab::verify::{bump, random_forcing, run_criterion, supercritical_ground};
use instablab::{classify, EquationKind, Nonlinearity, Potential, ProblemSpec, RadialGrid};

use crate::artifacts::{audit, Artifacts};
use crate::config::*;
use crate::error::{CliError, ErrorKind};
use crate::plot::{line_plot, Series};

pub fn run(command: Command, config: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    match command {
        Command::Classify => run_classify(config, out),
        Command::Steady => run_steady(config, out),
        Command::Spectrum => run_spectrum(config, out),
        Command::Evolve => run_evolve(config, out),
        Command::Ode => run_ode(config, out),
        Command::Sweep => run_sweep(config, out),
        Command::Verify => run_verify(config, out),
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn required_p(config: &RunConfig) -> Result<f64, CliError> {
    config.spec.p.ok_or_else(|| CliError::config("key `spec.p`: required for this command"))
}

fn potential(config: &RunConfig) -> Potential {
    let s = &config.spec;
    match s.potential {
        PotentialKind::Zero => Potential::Zero,
        PotentialKind::Constant => Potential::Constant { value: s.potential_strength },
        PotentialKind::AlgebraicDecay => Potential::AlgebraicDecay { c: s.potential_strength, l: s.potential_decay },
        PotentialKind::InverseSquareTail => Potential::InverseSquareTail { coupling: s.potential_strength },
    }
}

/// The problem spec; bubbles default to the Sobolev exponent.
pub fn problem_spec(config: &RunConfig) -> Result<ProblemSpec, CliError> {
    let s = &config.spec;
    let nonlinearity = match s.nonlinearity {
        NonlinearityKind::Exponential => Nonlinearity::Exponential,
        NonlinearityKind::Power => {
            let p = match (s.p, config.steady.family) {
                (Some(p), _) => p,
                (None, FamilyKey::Bubble) => sobolev_exponent(s.n)
                    .ok_or_else(|| CliError::config("key `spec.p`: bubbles need spec.n > 2"))?,
                (None, _) => return Err(CliError::config("key `spec.p`: required for this steady family")),
            };
            match potential(config) {
                Potential::Zero => Nonlinearity::Power { p },
                v => Nonlinearity::PowerWithPotential { p, potential: v },
            }
        }
    };
    let equation = match s.equation {
        EquationKey::Heat => EquationKind::Heat,
        EquationKey::Wave => EquationKind::Wave,
    };
    Ok(ProblemSpec::new(s.n, nonlinearity, s.damping, equation)?)
}

fn grid(config: &RunConfig) -> Result<RadialGrid, CliError> {
    let g = &config.grid;
    Ok(match g.kind {
        GridKindKey::Uniform => RadialGrid::uniform(g.r_max, g.nodes)?,
        GridKindKey::Stretched => RadialGrid::stretched(g.r_max, g.nodes, g.core_spacing.expect("validated"))?,
    })
}

fn profile(config: &RunConfig, spec: &ProblemSpec, grid: &RadialGrid) -> Result<SteadyStateProfile, CliError> {
    let st = &config.steady;
    let n = spec.n;
    let p = || spec.nonlinearity.exponent().ok_or_else(|| CliError::config("key `spec.nonlinearity`: this family needs power"));
    Ok(match st.family {
        FamilyKey::Bubble => critical_bubble(n, st.lambda, grid)?,
        FamilyKey::Exp2d => exp_steady_2d(st.lambda, grid)?,
        FamilyKey::Supercritical => shoot_supercritical(n, p()?, st.alpha, grid, st.tail_tol)?,
        FamilyKey::Potential => {
            shoot_with_potential(n, p()?, spec.potential(), grid, (st.bracket_lo, st.bracket_hi), st.residual_tol)?.profile
        }
        FamilyKey::Zero => SteadyStateProfile::zero(n, spec.nonlinearity, grid)?,
    })
}

fn run_classify(config: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let report = classify(config.spec.n, required_p(config)?)?;
    let value = to_json(&report);
    println!("{}", serde_json::to_string_pretty(&value).expect("report serializes"));
    out.json("classify.json", value)
}

fn run_steady(config: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let spec = problem_spec(config)?;
    let grid = grid(config)?;
    let profile = profile(config, &spec, &grid)?;
    let residual = relative_residual(&profile, &spec).ok();
    out.text("profile.txt", &profile.to_text())?;
    out.json(
        "steady.json",
        json!({
            "family": to_json(&profile.family()),
            "problem": to_json(&spec),
            "nodes": grid.len(),
            "r_max": grid.r_max(),
            "phi0": profile.phi()[0],
            "asymptotic_constant": profile.asymptotic_constant(),
            "relative_residual": residual,
        }),
    )?;
    if config.output.plot {
        let pts = grid.nodes().iter().copied().zip(profile.phi().iter().copied()).collect();
        out.svg("steady.svg", &line_plot("steady state", "r", "phi", &[Series { label: "phi", points: pts }]))?;
    }
    println!("steady state: phi(0) = {:.10e}, relative residual {}", profile.phi()[0], fmt_opt(residual));
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.3e}"))
}

fn spectral_summary(spec: &ProblemSpec, report: &SpectralReport, negative_modes: usize) -> Value {
    let condition = spec.nonlinearity.exponent().and_then(|p| negative_eigenvalue_condition(spec.n, p).ok());
    json!({
        "eigenvalue": report.eigenvalue,
        "discrete_eigenvalue": report.discrete_eigenvalue,
        "sigma_sq": report.sigma_sq,
        "chi_l1": report.chi_l1,
        "chi_l2": report.chi_l2,
        "eigen_residual": report.eigen_residual,
        "truncation_radius": report.truncation_radius,
        "refinement_history": report.refinement_history,
        "negative_modes": negative_modes,
        "negative_eigenvalue_condition": condition,
        "tail_decay_rate": tail_decay_rate(report).ok(),
        "suggested_truncation": report.sigma_sq.map(suggested_truncation),
    })
}

fn run_spectrum(config: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let spec = problem_spec(config)?;
    let grid = grid(config)?;
    let profile = profile(config, &spec, &grid)?;
    let op = build_linearized(&spec, &profile, &grid)?;
    let report = ground_state(&op)?;
    out.text("spectrum.txt", &report.to_text())?;
    out.json("spectrum.json", spectral_summary(&spec, &report, count_negative_modes(&op)))?;
    if config.output.plot {
        let pts = grid.nodes().iter().copied().zip(report.chi.iter().copied()).collect();
        out.svg("spectrum.svg", &line_plot("ground state", "r", "chi", &[Series { label: "chi", points: pts }]))?;
    }
    println!("ground state eigenvalue {:.10e}", report.eigenvalue);
    Ok(())
}

fn controls(config: &RunConfig) -> EvolutionControls {
    let s = &config.solver;
    EvolutionControls {
        output_interval: s.output_interval,
        dt_max: s.dt_max,
        reaction_factor: s.reaction_factor,
        cfl: s.cfl,
        cap: s.cap,
        dt_floor: s.dt_floor,
        sponge_fraction: s.sponge_fraction,
        sponge_strength: s.sponge_strength,
        reflection_tol: s.reflection_tol,
        fit_window: s.fit_lo.zip(s.fit_hi),
        reaction: match s.reaction {
            ReactionKey::Full => Reaction::Full,
            ReactionKey::Off => Reaction::Off,
        },
        max_steps: s.max_steps,
    }
}

fn run_evolve(config: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let spec = problem_spec(config)?;
    let grid = grid(config)?;
    let profile = profile(config, &spec, &grid)?;
    let op = build_linearized(&spec, &profile, &grid)?;
    let ground = ground_state(&op)?;
    let pert = &config.perturbation;
    let psi0: Vec<f64> = match pert.family {
        PerturbationFamily::ChiMultiple => ground.chi.iter().map(|c| pert.amplitude * c).collect(),
        PerturbationFamily::GaussianBump => {
            bump(&grid, pert.centre, pert.width).into_iter().map(|b| pert.amplitude * b).collect()
        }
    };
    let controls = controls(config);
    let t_max = config.solver.t_max;
    let (trace, pairing, side, expected_rate) = match spec.equation {
        EquationKind::Heat => {
            let trace = evolve_heat(&spec, &profile, &ground, &psi0, t_max, &controls)?;
            let pairing = perturbation_pairing(&grid, spec.n, &ground.chi, &psi0, None, 0.0, 1.0)?;
            (trace, Some(pairing), None, ground.sigma_sq)
        }
        EquationKind::Wave => {
            // λ₂ = (-a + √(a² + 4σ²))/2 is the coefficient for damping -a.
            let lambda2 = ground.sigma_sq.map(|s2| instability_coefficient(-spec.damping, s2)).transpose()?;
            let factor = match pert.psi1 {
                Psi1Rule::Zero => 0.0,
                Psi1Rule::Sigma => ground
                    .sigma()
                    .ok_or_else(|| CliError::config("key `perturbation.psi1`: `sigma` needs a negative eigenvalue"))?,
                Psi1Rule::Lambda2 => {
                    lambda2.ok_or_else(|| CliError::config("key `perturbation.psi1`: `lambda2` needs a negative eigenvalue"))?
                }
            };
            let psi1: Vec<f64> = psi0.iter().map(|v| factor * v).collect();
            let trace = evolve_wave(&spec, &profile, &ground, &psi0, &psi1, t_max, &controls)?;
            let (pairing, side) = match ground.sigma_sq {
                Some(s2) => {
                    let pairing = perturbation_pairing(&grid, spec.n, &ground.chi, &psi0, Some(&psi1), spec.damping, s2)?;
                    let side = (spec.damping == 0.0)
                        .then(|| tangent_plane_classifier(&grid, spec.n, &ground.chi, s2, &psi0, &psi1))
                        .transpose()?
                        .map(|(side, _)| side);
                    (Some(pairing), side)
                }
                None => (None, None),
            };
            (trace, pairing, side, lambda2)
        }
    };
    let limit = config.solver.linear_limit;
    let horizon = trace.linear_horizon(limit);
    let lo = config.solver.fit_lo.unwrap_or(0.1);
    let linear_rate = horizon.filter(|&h| h > lo).and_then(|h| growth_rate(&trace, (lo, h)).ok());

    out.text("trace.csv", &trace.to_csv())?;
    out.json(
        "evolve.json",
        json!({
            "problem": to_json(&spec),
            "eigenvalue": ground.eigenvalue,
            "sigma_sq": ground.sigma_sq,
            "expected_rate": expected_rate,
            "pairing": pairing,
            "tangent_plane": side.map(|s| to_json(&s)),
            "blowup": trace.blowup.map(|b| to_json(&b)),
            "fitted_rate": trace.fitted_rate,
            "linear_horizon": horizon,
            "linear_rate": linear_rate,
            "samples": trace.len(),
            "final_time": trace.times.last(),
        }),
    )?;
    if config.output.plot {
        out.svg("evolve.svg", &trace_plot(&trace))?;
    }
    match trace.blowup {
        Some(b) => println!("blow-up flagged at t ≈ {:.6}", b.time_estimate),
        None => println!("no blow-up before t = {}", trace.times.last().copied().unwrap_or(0.0)),
    }
    if let Some(rate) = linear_rate {
        println!("linear growth rate of G: {rate:.6}");
    }
    Ok(())
}

fn trace_plot(trace: &EvolutionTrace) -> String {
    let log = |v: &[f64]| -> Vec<(f64, f64)> { trace.times.iter().zip(v).map(|(&t, &y)| (t, y.abs().log10())).collect() };
    let mut series = vec![Series { label: "log10 |G|", points: log(&trace.g) }, Series { label: "log10 sup|w|", points: log(&trace.sup_norm) }];
    if let Some(e) = &trace.energy_norm {
        series.push(Series { label: "log10 energy norm", points: log(e) });
    }
    line_plot("perturbation growth", "t", "log10", &series)
}

fn run_ode(config: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let o = &config.ode;
    match o.lemma {
        Lemma::Ode1 => {
            let forcing = match o.forcing {
                ForcingKind::Zero => Forcing::Zero,
                ForcingKind::Trig => Forcing::Trig { c0: o.forcing_c0, c1: o.forcing_c1, omega: o.forcing_omega },
                ForcingKind::Random => random_forcing(&mut ChaCha8Rng::seed_from_u64(config.seed), o.horizon),
            };
            let problem = ComparisonProblem { a: o.a, b: o.b, y0: o.y0, yp0: o.yp0, forcing, horizon: o.horizon };
            let trace = problem.integrate(o.samples)?;
            let verdict = verify_ode1(&problem, o.samples)?;
            let mut csv = String::from("t,y,bound\n");
            for &(t, y) in &trace {
                let bound = ode1_lower_bound(o.a, o.b, o.y0, o.yp0, t)?;
                csv.push_str(&format!("{t:.16e},{y:.16e},{bound:.16e}\n"));
            }
            out.text("ode1.csv", &csv)?;
            let (l1, l2) = characteristic_roots(o.a, o.b)?;
            out.json(
                "ode.json",
                json!({
                    "lemma": "ode1",
                    "problem": to_json(&problem),
                    "roots": [l1, l2],
                    "verdict": to_json(&verdict),
                    "holds": verdict.holds(),
                }),
            )?;
            if config.output.plot {
                let y = trace.iter().copied().collect();
                let bound = trace.iter().map(|&(t, _)| (t, ode1_lower_bound(o.a, o.b, o.y0, o.yp0, t).unwrap_or(f64::NAN))).collect();
                out.svg("ode1.svg", &line_plot("comparison lemma", "t", "y", &[Series { label: "y", points: y }, Series { label: "bound", points: bound }]))?;
            }
            println!("comparison {}: worst margin {:.3e}", if verdict.holds() { "holds" } else { "fails" }, verdict.worst_margin);
        }
        Lemma::Ode2 => {
            let controls = Ode2Controls { dt_floor: o.dt_floor, cap: o.cap, horizon: o.max_time, rtol: o.rtol };
            let est = ode2_blowup(o.a, o.b, o.p, o.y0, o.yp0, &controls)?;
            let bound = ode2_energy_bound(o.b, o.p, o.y0, o.yp0)?;
            out.json(
                "ode.json",
                json!({
                    "lemma": "ode2",
                    "a": o.a, "b": o.b, "p": o.p, "y1": o.y0, "yp1": o.yp0,
                    "controls": to_json(&controls),
                    "estimate": to_json(&est),
                    "energy_bound": bound,
                    "energy_bound_applies": o.a <= 0.0,
                }),
            )?;
            println!("blow-up flagged after {:.10e} (energy bound {bound:.10e})", est.time);
        }
    }
    Ok(())
}

fn run_sweep(config: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let values = parse_range(&config.sweep.p_range)?;
    let n = config.spec.n;
    let sw = &config.sweep;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = sw.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::new(ErrorKind::Compute, e.to_string()))?;
    // `collect` on an indexed parallel iterator keeps parameter order.
    let rows: Vec<Value> = pool.install(|| {
        values
            .par_iter()
            .map(|&p| match sw.op {
                SweepOp::GroundState => match supercritical_ground(n, p, sw.core, sw.r_max, sw.nodes) {
                    Ok(r) => json!({
                        "p": p,
                        "eigenvalue": r.eigenvalue,
                        "discrete_eigenvalue": r.discrete_eigenvalue,
                        "negative_eigenvalue_condition": negative_eigenvalue_condition(n, p).ok(),
                        "status": "ok",
                    }),
                    Err(e) => json!({ "p": p, "status": e.to_string() }),
                },
                SweepOp::Classify => match classify(n, p) {
                    Ok(r) => json!({
                        "p": p,
                        "classification": to_json(&r.classification),
                        "script_q": r.script_q,
                        "status": "ok",
                    }),
                    Err(e) => json!({ "p": p, "status": e.to_string() }),
                },
            })
            .collect()
    });
    let columns: &[&str] = match sw.op {
        SweepOp::GroundState => &["p", "eigenvalue", "discrete_eigenvalue", "negative_eigenvalue_condition", "status"],
        SweepOp::Classify => &["p", "classification", "script_q", "status"],
    };
    let mut csv = columns.join(",");
    csv.push('\n');
    for row in &rows {
        let cells: Vec<String> = columns.iter().map(|c| csv_cell(row.get(*c))).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    out.text("sweep.csv", &csv)?;
    let crossings = sign_changes(&rows);
    let p_c = instablab::problem::p_critical(n).ok().map(|c| c.as_f64());
    out.json(
        "sweep.json",
        json!({ "n": n, "op": to_json(&sw.op), "rows": rows, "sign_changes": crossings, "p_c": p_c }),
    )?;
    if config.output.plot && sw.op == SweepOp::GroundState {
        let pts = rows
            .iter()
            .filter_map(|r| Some((r.get("p")?.as_f64()?, r.get("eigenvalue")?.as_f64()?)))
            .collect();
        out.svg("sweep.svg", &line_plot("first eigenvalue", "p", "eigenvalue", &[Series { label: "eigenvalue", points: pts }]))?;
    }
    println!("{} values swept; eigenvalue sign changes between {crossings:?}", rows.len());
    Ok(())
}

fn csv_cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::Number(x)) => match x.as_f64() {
            Some(f) if x.is_f64() => format!("{f:e}"),
            _ => x.to_string(),
        },
        Some(Value::String(s)) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

/// Adjacent parameter pairs across which the eigenvalue changes sign.
fn sign_changes(rows: &[Value]) -> Vec<[f64; 2]> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| Some((r.get("p")?.as_f64()?, r.get("eigenvalue")?.as_f64()?))).collect();
    pts.windows(2).filter(|w| (w[0].1 < 0.0) != (w[1].1 < 0.0)).map(|w| [w[0].0, w[1].0]).collect()
}

fn run_verify(config: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let ids: Vec<u8> = if config.verify.criteria.is_empty() {
        instablab::verify::criterion_ids().collect()
    } else {
        config.verify.criteria.clone()
    };
    let mut outcomes = Vec::new();
    for id in ids {
        let outcome = run_criterion(id).map_err(|e| CliError::config(format!("key `verify.criteria`: {e}")))?;
        println!("{}", outcome.line());
        outcomes.push(outcome);
    }
    let mut csv = String::from("id,title,passed,detail\n");
    for o in &outcomes {
        csv.push_str(&format!("{},{},{},{}\n", o.id, csv_cell(Some(&json!(o.title))), o.passed, csv_cell(Some(&json!(o.detail)))));
    }
    out.text("verify.csv", &csv)?;
    // Timings vary between runs and stay out of the reports.
    let records: Vec<Value> =
        outcomes.iter().map(|o| json!({ "id": o.id, "title": o.title, "passed": o.passed, "detail": o.detail })).collect();
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    out.json("verify.json", json!({ "criteria": records, "failed": failed }))?;
    println!("{}/{} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    if !failed.is_empty() {
        return Err(CliError::new(ErrorKind::Verification, format!("criteria {failed:?} failed")));
    }
    Ok(())
}

/// Checks that every file in the output directory carries a manifest hash.
pub fn audit_outputs(dir: &std::path::Path) -> Result<(), CliError> {
    let (count, missing) = audit(dir)?;
    if !missing.is_empty() {
        return Err(CliError::new(ErrorKind::Verification, format!("output files without a manifest hash: {missing:?}")));
    }
    println!("audit: all {count} files in {} carry a manifest hash", dir.display());
    Ok(())
}
