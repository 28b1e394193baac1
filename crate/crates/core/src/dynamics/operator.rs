//! Nodal form of the finite-volume operator `-Δ + V` with Dirichlet data at
//! `r_max`, shared by both evolution schemes.

use crate::error::{Error, Result};
use crate::grid::{sphere_area, RadialGrid};
use crate::problem::Potential;
use crate::spectrum::{LinearizedOperator, SymTridiagonal};

#[derive(Debug, Clone)]
pub(crate) struct Diffusion {
    n: u32,
    weights: Vec<f64>,
    sqrt_w: Vec<f64>,
    flux: Vec<f64>,
    potential: Vec<f64>,
    sym: SymTridiagonal,
}

impl Diffusion {
    pub(crate) fn new(n: u32, potential: Potential, grid: &RadialGrid) -> Result<Self> {
        let op = LinearizedOperator::schrodinger(n, potential, grid)?;
        let fv = op.discretize();
        let m = fv.weights.len();
        Ok(Self {
            n,
            sqrt_w: fv.weights.iter().map(|w| w.sqrt()).collect(),
            weights: fv.weights,
            flux: fv.flux,
            potential: op.effective_potential()[..m].to_vec(),
            sym: fv.matrix,
        })
    }

    /// Number of unknowns; the last grid node is held at zero.
    pub(crate) fn unknowns(&self) -> usize {
        self.weights.len()
    }

    /// Shell volumes of the unknowns (without the sphere factor).
    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Upper Gershgorin bound on the spectrum.
    pub(crate) fn spectral_radius(&self) -> f64 {
        self.sym.gershgorin().1
    }

    pub(crate) fn apply(&self, w: &[f64]) -> Vec<f64> {
        let m = self.unknowns();
        let mut out = vec![0.0; w.len()];
        for i in 0..m {
            let next = if i + 1 < m { w[i + 1] } else { 0.0 };
            let mut acc = self.flux[i] * (w[i] - next);
            if i > 0 {
                acc += self.flux[i - 1] * (w[i] - w[i - 1]);
            }
            out[i] = acc / self.weights[i] + self.potential[i] * w[i];
        }
        out
    }

    /// Solves `(I + c L) x = b` for `c > 0`.
    pub(crate) fn solve_implicit(&self, c: f64, b: &[f64]) -> Result<Vec<f64>> {
        let m = self.unknowns();
        let rhs: Vec<f64> = (0..m).map(|i| self.sqrt_w[i] * b[i] / c).collect();
        let y = self
            .sym
            .solve_shifted_spd(-1.0 / c, &rhs)
            .map_err(|_| Error::precondition("implicit diffusion step needs -Δ + V bounded below by -1/dt"))?;
        let mut x = vec![0.0; b.len()];
        for i in 0..m {
            x[i] = y[i] / self.sqrt_w[i];
        }
        Ok(x)
    }

    /// Per-face terms `ω c_{i+1/2} (w_{i+1} - w_i)²` of the discrete
    /// Dirichlet integral.
    pub(crate) fn gradient_terms(&self, w: &[f64]) -> Vec<f64> {
        let m = self.unknowns();
        let omega = sphere_area(self.n);
        (0..m)
            .map(|i| {
                let next = if i + 1 < m { w[i + 1] } else { 0.0 };
                omega * self.flux[i] * (next - w[i]).powi(2)
            })
            .collect()
    }

    pub(crate) fn gradient_sq(&self, w: &[f64]) -> f64 {
        self.gradient_terms(w).iter().sum()
    }
}
