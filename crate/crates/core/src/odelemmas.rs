//! Comparison lemmas for `y'' + a y' - b y ≥ 0` and `y'' + a y' = b y^p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{Advance, Dopri5};

/// Tolerance of the pointwise comparison in [`verify_ode1`].
pub const ODE1_TOL: f64 = 1e-8;
/// Fraction of `λ₂` the fitted growth rate must reach.
pub const ODE1_RATE_FRACTION: f64 = 0.95;

/// Roots `λ₁ < 0 < λ₂` of `λ² + aλ - b`.
pub fn characteristic_roots(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid(format!("characteristic roots need finite a and b > 0, got a = {a}, b = {b}")));
    }
    let disc = (a * a + 4.0 * b).sqrt();
    // Cancellation-free pair: the larger-magnitude root first, then Vieta.
    if a >= 0.0 {
        let l1 = -(a + disc) / 2.0;
        Ok((l1, -b / l1))
    } else {
        let l2 = (-a + disc) / 2.0;
        Ok((-b / l2, l2))
    }
}

/// `e^{λ₁t} y₀ + (e^{λ₂t} - e^{λ₁t})/(λ₂ - λ₁) · (y₀' - λ₁ y₀)`.
pub fn ode1_lower_bound(a: f64, b: f64, y0: f64, yp0: f64, t: f64) -> Result<f64> {
    let (l1, l2) = characteristic_roots(a, b)?;
    let z0 = yp0 - l1 * y0;
    let e1 = (l1 * t).exp();
    // (e^{λ₂t} - e^{λ₁t}) = e^{λ₁t} (e^{(λ₂-λ₁)t} - 1), kept accurate for small t.
    let spread = e1 * ((l2 - l1) * t).exp_m1() / (l2 - l1);
    Ok(e1 * y0 + spread * z0)
}

/// `(a + √(a² + 4b))/2 · y₀ + y₀' > 0`: the data has a component along the
/// growing mode.
pub fn ode1_initial_condition(a: f64, b: f64, y0: f64, yp0: f64) -> Result<bool> {
    let (l1, _) = characteristic_roots(a, b)?;
    Ok(yp0 - l1 * y0 > 0.0)
}

/// Nonnegative forcing terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forcing {
    Zero,
    /// `c0 + c1 sin²(ω t)`.
    Trig { c0: f64, c1: f64, omega: f64 },
    /// Steps between `levels` at `times`, each smoothed by a cubic ramp of
    /// the given width.
    Steps { times: Vec<f64>, levels: Vec<f64>, width: f64 },
}

impl Forcing {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Trig { c0, c1, omega } => c0 + c1 * (omega * t).sin().powi(2),
            Forcing::Steps { times, levels, width } => {
                let mut g = levels[0];
                for (i, &ti) in times.iter().enumerate() {
                    let s = ((t - ti) / width + 0.5).clamp(0.0, 1.0);
                    g += (levels[i + 1] - levels[i]) * s * s * (3.0 - 2.0 * s);
                }
                g
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Forcing::Zero => Ok(()),
            Forcing::Trig { c0, c1, omega } => {
                if *c0 >= 0.0 && *c1 >= 0.0 && omega.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("trigonometric forcing needs c0, c1 ≥ 0"))
                }
            }
            Forcing::Steps { times, levels, width } => {
                if levels.len() != times.len() + 1 {
                    return Err(Error::invalid("step forcing needs one more level than break time"));
                }
                if !(*width > 0.0) || levels.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::invalid("step forcing needs positive width and nonnegative levels"));
                }
                if times.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::invalid("step times must increase"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonProblem {
    pub a: f64,
    pub b: f64,
    pub y0: f64,
    pub yp0: f64,
    pub forcing: Forcing,
    pub horizon: f64,
}

impl ComparisonProblem {
    pub fn validate(&self) -> Result<()> {
        characteristic_roots(self.a, self.b)?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if !(self.y0.is_finite() && self.yp0.is_finite()) {
            return Err(Error::invalid("initial data must be finite"));
        }
        self.forcing.validate()
    }

    /// `y` at `samples + 1` equally spaced times on `[0, horizon]` for
    /// `y'' + a y' - b y = g`.
    pub fn integrate(&self, samples: usize) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        if samples == 0 {
            return Err(Error::invalid("need at least one sample interval"));
        }
        let (a, b) = (self.a, self.b);
        let f = |t: f64, y: &[f64; 2]| [y[1], self.forcing.eval(t) - a * y[1] + b * y[0]];
        let mut ode = Dopri5::new(0.0, [self.y0, self.yp0], 1e-12, 1e-14);
        let mut out = vec![(0.0, self.y0)];
        for i in 1..=samples {
            let t = self.horizon * i as f64 / samples as f64;
            ode.advance(f, t, |_, _, _| false)?;
            out.push((t, ode.y()[0]));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ode1Verdict {
    /// `y(tᵢ) ≥ bound(tᵢ) - 1e-8 (1 + |y(tᵢ)|)` at every sample.
    pub dominated: bool,
    /// Smallest `(y - bound) / (1 + |y|)` over the samples.
    pub worst_margin: f64,
    pub initial_condition: bool,
    pub lambda2: f64,
    /// Slope of `ln y` over the last third, when `y > 0` there.
    pub fitted_rate: Option<f64>,
}

impl Ode1Verdict {
    pub fn holds(&self) -> bool {
        self.dominated
            && (!self.initial_condition || self.fitted_rate.is_some_and(|r| r >= ODE1_RATE_FRACTION * self.lambda2))
    }
}

pub fn verify_ode1(problem: &ComparisonProblem, samples: usize) -> Result<Ode1Verdict> {
    let trace = problem.integrate(samples)?;
    let (_, l2) = characteristic_roots(problem.a, problem.b)?;
    let mut worst = f64::INFINITY;
    for &(t, y) in &trace {
        let bound = ode1_lower_bound(problem.a, problem.b, problem.y0, problem.yp0, t)?;
        worst = worst.min((y - bound) / (1.0 + y.abs()));
    }
    let window: Vec<(f64, f64)> = trace.iter().copied().filter(|&(t, _)| t >= 2.0 * problem.horizon / 3.0).collect();
    let fitted_rate = if window.len() >= 2 && window.iter().all(|&(_, y)| y > 0.0) {
        let (ts, ls): (Vec<f64>, Vec<f64>) = window.iter().map(|&(t, y)| (t, y.ln())).unzip();
        Some(crate::fit::slope(&ts, &ls)?)
    } else {
        None
    };
    Ok(Ode1Verdict {
        dominated: worst >= -ODE1_TOL,
        worst_margin: worst,
        initial_condition: ode1_initial_condition(problem.a, problem.b, problem.y0, problem.yp0)?,
        lambda2: l2,
        fitted_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ode2Controls {
    pub dt_floor: f64,
    pub cap: f64,
    pub horizon: f64,
    pub rtol: f64,
}

impl Default for Ode2Controls {
    fn default() -> Self {
        Self { dt_floor: 1e-13, cap: 1e10, horizon: 1e8, rtol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ode2Estimate {
    /// Time after `T₁` at which `y > cap` with a proposed step below the floor.
    pub time: f64,
    pub y: f64,
    pub steps: usize,
}

/// Integrates `y'' + a y' = b y^p` from `y(0) = y1 > 0`, `y'(0) = yp1 > 0`
/// until blow-up is detected.
pub fn ode2_blowup(a: f64, b: f64, p: f64, y1: f64, yp1: f64, controls: &Ode2Controls) -> Result<Ode2Estimate> {
    if !(b > 0.0 && p > 1.0 && y1 > 0.0 && yp1 > 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!(
            "blow-up lemma needs b > 0, p > 1, y(T₁) > 0, y'(T₁) > 0; got b = {b}, p = {p}, y = {y1}, y' = {yp1}"
        )));
    }
    if !(controls.dt_floor > 0.0 && controls.cap > 0.0 && controls.horizon > 0.0 && controls.rtol > 0.0) {
        return Err(Error::invalid("blow-up controls must be positive"));
    }
    let f = |_: f64, y: &[f64; 2]| [y[1], b * y[0].abs().powf(p) - a * y[1]];
    let mut ode = Dopri5::new(0.0, [y1, yp1], controls.rtol, 0.0).with_max_steps(50_000_000);
    loop {
        let mut blown = false;
        let local_t = ode.t();
        let outcome = ode.advance(f, controls.horizon, |t, y, h| {
            blown = y[0] > controls.cap && h < controls.dt_floor;
            // The system is autonomous; restart the clock once steps become
            // small against the elapsed time so they can keep shrinking.
            blown || h < 1e-6 * (t - local_t).abs()
        })?;
        if blown {
            return Ok(Ode2Estimate { time: ode.t(), y: ode.y()[0], steps: ode.accepted_steps() });
        }
        match outcome {
            Advance::Reached => return Err(Error::NoBlowUp { horizon: controls.horizon }),
            Advance::Stopped => ode.rebase(),
        }
    }
}

/// Blow-up time of `y'' = b y^p` from the energy identity,
/// `∫_{y1}^∞ dy / √(yp1² + 2b (y^{p+1} - y1^{p+1})/(p+1))`. It bounds the blow-up
/// time from above whenever `a ≤ 0`.
pub fn ode2_energy_bound(b: f64, p: f64, y1: f64, yp1: f64) -> Result<f64> {
    if !(b > 0.0 && p > 1.0 && y1 > 0.0 && yp1 > 0.0) {
        return Err(Error::invalid("energy bound needs b > 0, p > 1, y1 > 0, yp1 > 0"));
    }
    // y = y1 v^{-m} with m = 2/(p-1) makes the integrand bounded on [0, 1].
    let m = 2.0 / (p - 1.0);
    let c = 2.0 * b / (p + 1.0) * y1.powf(p + 1.0);
    let e = m * (p + 1.0);
    let integrand = |v: f64| {
        let ve = v.powf(e);
        y1 * m / (yp1 * yp1 * ve + c * (1.0 - ve)).sqrt()
    };
    let mut intervals = 64usize;
    let mut previous = simpson_fn(&integrand, intervals);
    while intervals < 1 << 22 {
        intervals *= 2;
        let value = simpson_fn(&integrand, intervals);
        if (value - previous).abs() <= 1e-13 * value {
            return Ok(value);
        }
        previous = value;
    }
    Err(Error::NonConvergence("energy-bound quadrature did not settle".into()))
}

fn simpson_fn(f: &impl Fn(f64) -> f64, intervals: usize) -> f64 {
    let h = 1.0 / intervals as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..intervals {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_examples() {
        assert_eq!(characteristic_roots(0.0, 1.0).unwrap(), (-1.0, 1.0));
        let (l1, l2) = characteristic_roots(3.0, 4.0).unwrap();
        assert!((l1 + 4.0).abs() < 1e-15 && (l2 - 1.0).abs() < 1e-15);
        assert!(characteristic_roots(1.0, 0.0).is_err());
        assert!(characteristic_roots(1.0, -2.0).is_err());
    }

    #[test]
    fn bound_example_and_start() {
        let e = std::f64::consts::E;
        let v = ode1_lower_bound(0.0, 1.0, 1.0, 2.0, 1.0).unwrap();
        assert!((v - (1.0 / e + 1.5 * (e - 1.0 / e))).abs() < 1e-14);
        assert!((v - 3.89348).abs() < 1e-5);
        assert_eq!(ode1_lower_bound(2.0, 3.0, 0.7, -5.0, 0.0).unwrap(), 0.7);
    }

    #[test]
    fn forcing_steps_are_smooth_and_nonnegative() {
        let g = Forcing::Steps { times: vec![1.0, 2.0], levels: vec![0.0, 3.0, 1.0], width: 0.1 };
        assert_eq!(g.eval(0.0), 0.0);
        assert_eq!(g.eval(1.5), 3.0);
        assert_eq!(g.eval(5.0), 1.0);
        assert!((g.eval(1.0) - 1.5).abs() < 1e-15);
        assert!(Forcing::Steps { times: vec![1.0], levels: vec![0.0, -1.0], width: 0.1 }.validate().is_err());
    }

    #[test]
    fn stable_ray_has_no_growth() {
        let (l1, _) = characteristic_roots(1.0, 2.0).unwrap();
        let prob = ComparisonProblem { a: 1.0, b: 2.0, y0: 1.0, yp0: l1, forcing: Forcing::Zero, horizon: 3.0 };
        let v = verify_ode1(&prob, 30).unwrap();
        assert!(!v.initial_condition);
        assert!(v.dominated);
        assert!(v.worst_margin.abs() < 1e-8);
        assert!(v.holds());
    }

    #[test]
    fn energy_bound_closed_form() {
        // yp1² = c y1^{p+1} makes y' = √c y^{(p+1)/2}; for p = 3 the blow-up
        // time is 1/(√c y1) with c = b/2.
        let (b, y1) = (2.0, 0.5);
        let yp1 = (b / 2.0_f64).sqrt() * y1 * y1;
        let t = ode2_energy_bound(b, 3.0, y1, yp1).unwrap();
        assert!((t - 1.0 / ((b / 2.0_f64).sqrt() * y1)).abs() < 1e-11);
    }

    #[test]
    fn blowup_rejects_bad_data() {
        let c = Ode2Controls::default();
        assert!(ode2_blowup(0.0, 1.0, 3.0, -1.0, 0.1, &c).is_err());
        assert!(ode2_blowup(0.0, 1.0, 1.0, 1.0, 0.1, &c).is_err());
        assert!(ode2_blowup(0.0, 0.0, 3.0, 1.0, 0.1, &c).is_err());
    }
}
