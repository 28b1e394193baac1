//! Emden–Fowler form `W(s) = e^{ks} φ(e^s)`, `k = 2/(p-1)`, in which the
//! radial equation `-Δφ = φ^p` becomes the autonomous ODE
//! `W'' + (n-2-2k) W' - Q(k) W + W^p = 0`.

use super::SteadyStateProfile;
use crate::error::{Error, Result};
use crate::grid::{derivative4, second_derivative4};
use crate::problem::{decay_exponent, q_of_alpha};

#[derive(Debug, Clone, PartialEq)]
pub struct EmdenFowler {
    pub s: Vec<f64>,
    pub w: Vec<f64>,
    /// Max residual of the expanded ODE.
    pub residual: f64,
    /// Max residual of the factored form `Q(k - ∂_s) W - W^p`.
    pub operator_residual: f64,
}

/// Pointwise residual of the expanded ODE from uniformly spaced samples;
/// the two samples at each end are `NaN`.
pub fn ef_residual(n: u32, p: f64, ds: f64, w: &[f64]) -> Vec<f64> {
    let k = decay_exponent(p);
    let q = q_of_alpha(n, k);
    let b = n as f64 - 2.0 - 2.0 * k;
    let d1 = derivative4(w, ds);
    let d2 = second_derivative4(w, ds);
    w.iter()
        .zip(&d1)
        .zip(&d2)
        .map(|((&w, &w1), &w2)| w2 + b * w1 - q * w + w.abs().powf(p))
        .collect()
}

/// Residual of `(k - D)(n - 2 - k + D) W - W^p`, applying the two
/// first-order factors in sequence.
pub fn ef_operator_residual(n: u32, p: f64, ds: f64, w: &[f64]) -> Vec<f64> {
    let k = decay_exponent(p);
    let m = n as f64 - 2.0 - k;
    let dw = derivative4(w, ds);
    let inner: Vec<f64> = w.iter().zip(&dw).map(|(w, d)| m * w + d).collect();
    let d_inner = derivative4(&inner, ds);
    let mut out: Vec<f64> = inner
        .iter()
        .zip(&d_inner)
        .zip(w)
        .map(|((v, dv), w)| k * v - dv - w.abs().powf(p))
        .collect();
    // Nested one-sided stencils are only second order near the ends.
    let len = out.len();
    for (i, v) in out.iter_mut().enumerate() {
        if i < 2 || i + 2 >= len {
            *v = f64::NAN;
        }
    }
    out
}

fn max_interior(v: &[f64]) -> f64 {
    v.iter().filter(|x| !x.is_nan()).fold(0.0, |m, x| m.max(x.abs()))
}

/// Transforms a power-law steady state onto a uniform `s = ln r` grid
/// spanning `[ln r_lo, ln r_max]`, with `r_lo` the first positive node (or
/// `r_max·10⁻⁸` if that is larger).
pub fn emden_fowler(profile: &SteadyStateProfile, p: f64) -> Result<EmdenFowler> {
    if profile.nonlinearity().exponent().is_none() {
        return Err(Error::precondition("Emden–Fowler form needs a power nonlinearity"));
    }
    let grid = profile.grid();
    let r_lo = grid.nodes()[1].max(grid.r_max() * 1e-8);
    let (s0, s1) = (r_lo.ln(), grid.r_max().ln());
    let count = grid.len();
    let ds = (s1 - s0) / (count - 1) as f64;
    let k = decay_exponent(p);
    let mut s = Vec::with_capacity(count);
    let mut w = Vec::with_capacity(count);
    for i in 0..count {
        let si = if i + 1 == count { s1 } else { s0 + i as f64 * ds };
        let r = si.exp().min(grid.r_max());
        let (phi, _) = profile
            .value_at(r)
            .ok_or_else(|| Error::precondition(format!("profile undefined at r = {r}")))?;
        s.push(si);
        w.push((k * si).exp() * phi);
    }
    let residual = max_interior(&ef_residual(profile.n(), p, ds, &w));
    let operator_residual = max_interior(&ef_operator_residual(profile.n(), p, ds, &w));
    Ok(EmdenFowler { s, w, residual, operator_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RadialGrid;
    use crate::steady::{critical_bubble, shoot_supercritical};

    #[test]
    fn equilibrium_is_exact() {
        for (n, p) in [(13u32, 3.0), (5, 4.0), (20, 2.5)] {
            let w_star = q_of_alpha(n, decay_exponent(p)).powf(1.0 / (p - 1.0));
            let w = vec![w_star; 40];
            let r = max_interior(&ef_residual(n, p, 0.1, &w));
            assert!(r <= 1e-12 * w_star.powf(p), "{r}");
            assert!(max_interior(&ef_operator_residual(n, p, 0.1, &w)) <= 1e-12 * w_star.powf(p));
        }
    }

    #[test]
    fn bubble_transform_vanishes_at_minus_infinity() {
        let grid = RadialGrid::uniform(40.0, 4096).unwrap();
        let ef = emden_fowler(&critical_bubble(3, 1.0, &grid).unwrap(), 5.0).unwrap();
        assert!(ef.w[0] < 0.2, "{}", ef.w[0]);
        assert!(ef.w.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(ef.residual < 1e-7, "{}", ef.residual);
        assert!(ef.operator_residual < 1e-6, "{}", ef.operator_residual);
    }

    #[test]
    fn supercritical_transform_approaches_equilibrium() {
        let grid = RadialGrid::uniform(100.0, 4096).unwrap();
        let prof = shoot_supercritical(13, 3.0, 1.0, &grid, 1e-3).unwrap();
        let ef = emden_fowler(&prof, 3.0).unwrap();
        let last = *ef.w.last().unwrap();
        assert!((last / 10f64.sqrt() - 1.0).abs() < 5e-3, "{last}");
        assert!(ef.residual < 1e-3, "{}", ef.residual);
    }
}
