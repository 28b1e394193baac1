//! Dormand–Prince 5(4) integrator for small fixed-size systems.
//!
//! The driver exposes the accepted-step stream through a stop predicate so
//! callers can watch for events (zero crossings, amplitude caps, step
//! collapse) without dense output.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    Reached,
    Stopped,
}

#[derive(Debug, Clone)]
pub struct Dopri5<const N: usize> {
    offset: f64,
    t: f64,
    y: [f64; N],
    k1: Option<[f64; N]>,
    h: Option<f64>,
    rtol: f64,
    atol: f64,
    max_steps: usize,
    accepted: usize,
    rejected: usize,
}

impl<const N: usize> Dopri5<N> {
    pub fn new(t0: f64, y0: [f64; N], rtol: f64, atol: f64) -> Self {
        Self {
            offset: 0.0,
            t: t0,
            y: y0,
            k1: None,
            h: None,
            rtol,
            atol,
            max_steps: 5_000_000,
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn with_initial_step(mut self, h: f64) -> Self {
        self.h = Some(h);
        self
    }

    pub fn with_max_steps(mut self, max_steps: usize) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn t(&self) -> f64 {
        self.offset + self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    /// Step size the controller proposes next (unclipped by output targets).
    pub fn step_size(&self) -> Option<f64> {
        self.h
    }

    pub fn accepted_steps(&self) -> usize {
        self.accepted
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    /// Moves the accumulated time into an offset so that the local clock
    /// restarts at zero. Only valid for autonomous right-hand sides, where it
    /// lets steps shrink far below `eps * t`.
    pub fn rebase(&mut self) {
        self.offset += self.t;
        self.t = 0.0;
    }

    /// Integrates towards `t_target`, calling `stop(t, y, h_next)` after
    /// every accepted step. Returns `Stopped` as soon as the predicate fires.
    pub fn advance<F, S>(&mut self, mut f: F, t_target: f64, mut stop: S) -> Result<Advance>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
        S: FnMut(f64, &[f64; N], f64) -> bool,
    {
        let target = t_target - self.offset;
        if target == self.t {
            return Ok(Advance::Reached);
        }
        let dir = if target >= self.t { 1.0 } else { -1.0 };
        if self.k1.is_none() {
            self.k1 = Some(f(self.t(), &self.y));
        }
        if self.h.is_none() {
            let k1 = self.k1.unwrap();
            self.h = Some(self.initial_step(&mut f, &k1, target));
        }
        while (target - self.t) * dir > 0.0 {
            if self.accepted + self.rejected >= self.max_steps {
                return Err(Error::NonConvergence(format!(
                    "step budget of {} exhausted at t = {}",
                    self.max_steps,
                    self.t()
                )));
            }
            let natural = self.h.unwrap().abs();
            let remaining = (target - self.t).abs();
            let clipped = natural >= remaining;
            let h = dir * natural.min(remaining);
            let floor = 8.0 * f64::EPSILON * self.t.abs().max(f64::MIN_POSITIVE);
            if h.abs() <= floor && !clipped {
                let sup = self.y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                return Err(Error::StepCollapse { t: self.t(), dt: h.abs(), sup });
            }
            let (y_new, k7, err) = self.trial(&mut f, h);
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && err.is_finite() {
                self.t = if clipped { target } else { self.t + h };
                self.y = y_new;
                self.k1 = Some(k7);
                self.accepted += 1;
                // A clipped step says nothing about the natural scale, so keep it.
                let next = if clipped { natural.max(h.abs() * factor) } else { natural * factor };
                self.h = Some(dir * next);
                if stop(self.t(), &self.y, next) {
                    return Ok(Advance::Stopped);
                }
            } else {
                self.rejected += 1;
                let shrink = if err.is_finite() { factor.min(1.0) } else { 0.2 };
                self.h = Some(dir * h.abs() * shrink);
            }
        }
        Ok(Advance::Reached)
    }

    fn trial<F>(&self, f: &mut F, h: f64) -> ([f64; N], [f64; N], f64)
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let mut k = [[0.0; N]; 7];
        k[0] = self.k1.unwrap();
        for s in 1..7 {
            let mut ys = self.y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..N {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            if s == 6 {
                // FSAL: the seventh stage point is the fifth-order solution.
                k[6] = f(self.t() + h, &ys);
                let err = self.error_norm(&ys, &k, h);
                return (ys, k[6], err);
            }
            k[s] = f(self.t() + C[s] * h, &ys);
        }
        unreachable!()
    }

    fn error_norm(&self, y_new: &[f64; N], k: &[[f64; N]; 7], h: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * h;
            let scale = self.atol + self.rtol * self.y[i].abs().max(y_new[i].abs());
            acc += (e / scale).powi(2);
        }
        if y_new.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        (acc / N as f64).sqrt()
    }

    fn initial_step<F>(&self, f: &mut F, k1: &[f64; N], target: f64) -> f64
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let scale = |i: usize| self.atol + self.rtol * self.y[i].abs();
        let rms = |v: &dyn Fn(usize) -> f64| ((0..N).map(|i| v(i).powi(2)).sum::<f64>() / N as f64).sqrt();
        let d0 = rms(&|i| self.y[i] / scale(i));
        let d1 = rms(&|i| k1[i] / scale(i));
        let span = (target - self.t).abs();
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span);
        let dir = if target >= self.t { 1.0 } else { -1.0 };
        let mut y1 = self.y;
        for i in 0..N {
            y1[i] += dir * h0 * k1[i];
        }
        let k2 = f(self.t() + dir * h0, &y1);
        let d2 = rms(&|i| (k2[i] - k1[i]) / scale(i)) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span).max(f64::MIN_POSITIVE)
    }
}
