//! Radial grids, quadrature over balls, and finite-difference stencils.
//!
//! Every grid is the image of a uniform grid in a computational coordinate
//! `xi ∈ [0, 1]` under a smooth monotone map `r(xi)`. Quadrature is done in
//! `xi` with the Jacobian `dr/dxi` folded into the integrand, so a stretched
//! grid keeps the accuracy of composite Simpson.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest node count accepted for a radial grid.
pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridKind {
    /// `r = r_max * xi`.
    Uniform,
    /// `r = r_max * sinh(beta * xi) / sinh(beta)`: fine near the origin,
    /// geometric in the far field.
    Stretched { beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    kind: GridKind,
    r_max: f64,
    nodes: Vec<f64>,
    jacobian: Vec<f64>,
}

impl RadialGrid {
    pub fn uniform(r_max: f64, node_count: usize) -> Result<Self> {
        Self::with_kind(GridKind::Uniform, r_max, node_count)
    }

    /// Stretched grid whose first cell has width `core_spacing`.
    pub fn stretched(r_max: f64, node_count: usize, core_spacing: f64) -> Result<Self> {
        check_extent(r_max, node_count)?;
        let target = core_spacing * (node_count - 1) as f64 / r_max;
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::invalid(format!(
                "core spacing {core_spacing} must be finer than the uniform spacing {}",
                r_max / (node_count - 1) as f64
            )));
        }
        // beta / sinh(beta) is decreasing from 1 to 0.
        let (mut lo, mut hi) = (1e-9_f64, 700.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid / mid.sinh() > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Self::with_kind(GridKind::Stretched { beta: 0.5 * (lo + hi) }, r_max, node_count)
    }

    pub fn with_kind(kind: GridKind, r_max: f64, node_count: usize) -> Result<Self> {
        check_extent(r_max, node_count)?;
        let last = node_count - 1;
        let mut nodes = Vec::with_capacity(node_count);
        let mut jacobian = Vec::with_capacity(node_count);
        for i in 0..node_count {
            let xi = i as f64 / last as f64;
            let (r, j) = map(kind, r_max, xi);
            nodes.push(r);
            jacobian.push(j);
        }
        nodes[0] = 0.0;
        nodes[last] = r_max;
        Self::from_parts(kind, nodes, jacobian)
    }

    /// Rebuilds a grid from stored nodes, recomputing the Jacobian from the map.
    pub fn from_nodes(kind: GridKind, nodes: Vec<f64>) -> Result<Self> {
        let node_count = nodes.len();
        let r_max = *nodes.last().ok_or_else(|| Error::invalid("empty node list"))?;
        check_extent(r_max, node_count)?;
        let last = node_count - 1;
        let jacobian = (0..node_count)
            .map(|i| map(kind, r_max, i as f64 / last as f64).1)
            .collect();
        Self::from_parts(kind, nodes, jacobian)
    }

    fn from_parts(kind: GridKind, nodes: Vec<f64>, jacobian: Vec<f64>) -> Result<Self> {
        if nodes[0] != 0.0 {
            return Err(Error::invalid("first node must be exactly 0"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid nodes must be strictly increasing"));
        }
        let r_max = nodes[nodes.len() - 1];
        Ok(Self { kind, r_max, nodes, jacobian })
    }

    /// Same map with a different node count.
    pub fn resampled(&self, node_count: usize) -> Result<Self> {
        Self::with_kind(self.kind, self.r_max, node_count)
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn jacobian(&self) -> &[f64] {
        &self.jacobian
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, GridKind::Uniform)
    }

    /// Spacing of the computational coordinate.
    pub fn xi_step(&self) -> f64 {
        1.0 / (self.nodes.len() - 1) as f64
    }

    /// Physical spacing of a uniform grid, or the first cell width otherwise.
    pub fn spacing(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Index of the cell `[r_i, r_{i+1}]` containing `r`.
    pub fn locate(&self, r: f64) -> Option<usize> {
        if !(0.0..=self.r_max).contains(&r) {
            return None;
        }
        let idx = self.nodes.partition_point(|&x| x <= r);
        Some(idx.saturating_sub(1).min(self.nodes.len() - 2))
    }

    pub fn check_samples(&self, samples: &[f64]) -> Result<()> {
        if samples.len() != self.nodes.len() {
            return Err(Error::GridMismatch { expected: self.nodes.len(), found: samples.len() });
        }
        Ok(())
    }
}

fn check_extent(r_max: f64, node_count: usize) -> Result<()> {
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(Error::invalid(format!("r_max must be positive and finite, got {r_max}")));
    }
    if node_count < MIN_NODES {
        return Err(Error::invalid(format!("node count {node_count} is below {MIN_NODES}")));
    }
    Ok(())
}

fn map(kind: GridKind, r_max: f64, xi: f64) -> (f64, f64) {
    match kind {
        GridKind::Uniform => (r_max * xi, r_max),
        GridKind::Stretched { beta } => {
            let s = beta.sinh();
            (r_max * (beta * xi).sinh() / s, r_max * beta * (beta * xi).cosh() / s)
        }
    }
}

/// Surface area of the unit sphere in `R^n` (`omega_{n-1}`); 2 for `n = 1`.
pub fn sphere_area(n: u32) -> f64 {
    match n {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (n - 2) as f64 * sphere_area(n - 2),
    }
}

/// Composite Simpson on equally spaced samples. An odd number of intervals
/// closes with Simpson's 3/8 rule on the last three.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let m = values.len().saturating_sub(1);
    match m {
        0 => 0.0,
        1 => 0.5 * h * (values[0] + values[1]),
        _ => {
            let (even_end, tail) = if m % 2 == 0 { (m, None) } else { (m - 3, Some(m - 3)) };
            let mut acc = 0.0;
            if even_end > 0 {
                acc += values[0] + values[even_end];
                for (k, v) in values[1..even_end].iter().enumerate() {
                    acc += if k % 2 == 0 { 4.0 * v } else { 2.0 * v };
                }
                acc *= h / 3.0;
            }
            if let Some(s) = tail {
                acc += 3.0 * h / 8.0
                    * (values[s] + 3.0 * values[s + 1] + 3.0 * values[s + 2] + values[s + 3]);
            }
            acc
        }
    }
}

/// `omega_{n-1} * ∫_0^{r_max} f(r) r^{n-1} dr` from node samples of `f`.
pub fn radial_integral(grid: &RadialGrid, n: u32, f: &[f64]) -> f64 {
    debug_assert_eq!(f.len(), grid.len());
    let weighted: Vec<f64> = f
        .iter()
        .zip(grid.nodes())
        .zip(grid.jacobian())
        .map(|((&v, &r), &j)| v * r.powi(n as i32 - 1) * j)
        .collect();
    sphere_area(n) * simpson(&weighted, grid.xi_step())
}

/// Radial integral of a product of two sample vectors.
pub fn radial_inner(grid: &RadialGrid, n: u32, a: &[f64], b: &[f64]) -> f64 {
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    radial_integral(grid, n, &prod)
}

/// Cubic Hermite interpolation from values and derivatives at the nodes.
/// Returns `(value, derivative)`; `None` outside the grid.
pub fn hermite(grid: &RadialGrid, f: &[f64], df: &[f64], r: f64) -> Option<(f64, f64)> {
    let i = grid.locate(r)?;
    let (r0, r1) = (grid.nodes()[i], grid.nodes()[i + 1]);
    let h = r1 - r0;
    let t = (r - r0) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = h00 * f[i] + h10 * h * df[i] + h01 * f[i + 1] + h11 * h * df[i + 1];
    let d00 = (6.0 * t2 - 6.0 * t) / h;
    let d10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d01 = (-6.0 * t2 + 6.0 * t) / h;
    let d11 = 3.0 * t2 - 2.0 * t;
    let deriv = d00 * f[i] + d10 * df[i] + d01 * f[i + 1] + d11 * df[i + 1];
    Some((value, deriv))
}

/// How the radial Laplacian treats the first two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OriginStencil {
    /// Centred stencils on the even reflection `f(-r) = f(r)`; the accurate
    /// choice for functions smooth in `x`.
    Reflect,
    /// One-sided six-point stencils, for radial functions with odd powers of
    /// `r` near the origin (only `C²` in `x`).
    OneSided,
}

/// Fourth-order radial Laplacian `f'' + (n-1) f' / r` on a uniform grid,
/// with the regular limit `n f''(0)` at `r = 0`. Defined for nodes
/// `0..len-2`; the last two nodes lack a centred stencil and are `NaN`.
pub fn radial_laplacian4(f: &[f64], h: f64, n: u32, origin: OriginStencil) -> Vec<f64> {
    const D2_AT0: [f64; 6] = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
    const D2_AT1: [f64; 6] = [10.0, -15.0, -4.0, 14.0, -6.0, 1.0];
    let len = f.len();
    let mut out = vec![f64::NAN; len];
    if len < 6 {
        return out;
    }
    let nm1 = (n as f64) - 1.0;
    let at = |i: isize| f[i.unsigned_abs()];
    let centred_d2 = |k: isize| {
        (-at(k - 2) + 16.0 * at(k - 1) - 30.0 * at(k) + 16.0 * at(k + 1) - at(k + 2)) / (12.0 * h * h)
    };
    let centred_d1 = |k: isize| (at(k - 2) - 8.0 * at(k - 1) + 8.0 * at(k + 1) - at(k + 2)) / (12.0 * h);
    match origin {
        OriginStencil::Reflect => {
            out[0] = n as f64 * centred_d2(0);
            out[1] = centred_d2(1) + nm1 * centred_d1(1) / h;
        }
        OriginStencil::OneSided => {
            let one_sided = |w: &[f64; 6]| w.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() / (12.0 * h * h);
            let d1 = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h);
            out[0] = n as f64 * one_sided(&D2_AT0);
            out[1] = one_sided(&D2_AT1) + nm1 * d1 / h;
        }
    }
    for (i, slot) in out.iter_mut().enumerate().take(len - 2).skip(2) {
        let k = i as isize;
        *slot = centred_d2(k) + nm1 * centred_d1(k) / (i as f64 * h);
    }
    out
}

/// Fourth-order first derivative on a uniform grid; one-sided five-point
/// stencils at both ends.
pub fn derivative4(f: &[f64], h: f64) -> Vec<f64> {
    const FIRST: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
    const SECOND: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
    let len = f.len();
    let dot = |w: &[f64; 5], base: usize, sign: f64| {
        w.iter().zip(&f[base..base + 5]).map(|(a, b)| a * b).sum::<f64>() * sign / (12.0 * h)
    };
    let mirrored = |w: &[f64; 5]| {
        let mut m = *w;
        m.reverse();
        m
    };
    (0..len)
        .map(|i| match i {
            0 => dot(&FIRST, 0, 1.0),
            1 => dot(&SECOND, 0, 1.0),
            _ if i + 2 < len => {
                (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h)
            }
            _ if i + 1 == len => dot(&mirrored(&FIRST), len - 5, -1.0),
            _ => dot(&mirrored(&SECOND), len - 5, -1.0),
        })
        .collect()
}

/// Fourth-order second derivative on a uniform grid (interior nodes only;
/// the two nodes at each end are `NaN`).
pub fn second_derivative4(f: &[f64], h: f64) -> Vec<f64> {
    let len = f.len();
    let mut out = vec![f64::NAN; len];
    for i in 2..len.saturating_sub(2) {
        out[i] = (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2])
            / (12.0 * h * h);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_nodes_hit_endpoints() {
        let g = RadialGrid::uniform(40.0, 4096).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.nodes()[4095], 40.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_small_or_degenerate_grids() {
        assert!(RadialGrid::uniform(1.0, 8).is_err());
        assert!(RadialGrid::uniform(-1.0, 64).is_err());
        assert!(RadialGrid::stretched(10.0, 64, 1.0).is_err());
    }

    #[test]
    fn stretched_grid_has_requested_core_spacing() {
        let g = RadialGrid::stretched(1e5, 4096, 1e-3).unwrap();
        assert!((g.spacing() / 1e-3 - 1.0).abs() < 1e-3, "{}", g.spacing());
        assert_eq!(g.nodes()[4095], 1e5);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn simpson_is_exact_for_cubics_with_either_parity() {
        for m in [6usize, 7] {
            let h = 2.0 / m as f64;
            let v: Vec<f64> = (0..=m).map(|i| (i as f64 * h).powi(3)).collect();
            assert!((simpson(&v, h) - 4.0).abs() < 1e-13, "m = {m}");
        }
    }

    #[test]
    fn radial_integral_of_gaussian_on_stretched_grid() {
        // ∫_{R^3} e^{-r^2} dx = pi^{3/2}
        for g in [
            RadialGrid::uniform(12.0, 2001).unwrap(),
            RadialGrid::stretched(12.0, 2001, 1e-3).unwrap(),
        ] {
            let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
            let got = radial_integral(&g, 3, &f);
            assert!((got / PI.powf(1.5) - 1.0).abs() < 1e-9, "{got}");
        }
    }

    #[test]
    fn laplacian_is_fourth_order() {
        // f = exp(-r^2): Δf = (4 r^2 - 2 n) e^{-r^2}
        let err = |nodes: usize| {
            let g = RadialGrid::uniform(6.0, nodes).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
            let lap = radial_laplacian4(&f, g.spacing(), 3, OriginStencil::Reflect);
            g.nodes()
                .iter()
                .zip(&lap)
                .take(nodes - 2)
                .map(|(r, l)| (l - (4.0 * r * r - 6.0) * (-r * r).exp()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(201) / err(401);
        assert!(ratio > 14.0 && ratio < 18.0, "ratio {ratio}");
    }

    #[test]
    fn laplacian_handles_odd_powers_at_origin() {
        // f = 1 + r³ (a C² radial function): Δf = 3(n+1) r
        let g = RadialGrid::uniform(2.0, 41).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|r| 1.0 + r.powi(3)).collect();
        let lap = radial_laplacian4(&f, g.spacing(), 3, OriginStencil::OneSided);
        for (r, l) in g.nodes().iter().zip(&lap).take(39) {
            assert!((l - 12.0 * r).abs() < 1e-9, "r = {r}: {l}");
        }
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let g = RadialGrid::uniform(3.0, 31).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|r| r.powi(3) - r).collect();
        let df: Vec<f64> = g.nodes().iter().map(|r| 3.0 * r * r - 1.0).collect();
        let (v, d) = hermite(&g, &f, &df, 1.234).unwrap();
        assert!((v - (1.234f64.powi(3) - 1.234)).abs() < 1e-12);
        assert!((d - (3.0 * 1.234 * 1.234 - 1.0)).abs() < 1e-11);
        assert!(hermite(&g, &f, &df, 3.5).is_none());
    }

    #[test]
    fn derivative4_on_polynomial() {
        let h = 0.1;
        let f: Vec<f64> = (0..20).map(|i| (i as f64 * h).powi(4)).collect();
        let d = derivative4(&f, h);
        for (i, v) in d.iter().enumerate() {
            let x = i as f64 * h;
            assert!((v - 4.0 * x.powi(3)).abs() < 1e-9, "i={i} {v}");
        }
    }
}
