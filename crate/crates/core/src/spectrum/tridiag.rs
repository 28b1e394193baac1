//! Symmetric tridiagonal matrices: Sturm counts, bisection and shifted
//! solves.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::invalid("tridiagonal needs len(off) = len(diag) - 1 > -1"));
        }
        Ok(Self { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.len() {
            let coupling = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] / q };
            q = self.diag[i] - x - coupling;
            if q == 0.0 {
                q = -f64::EPSILON * (self.diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    pub fn gershgorin(&self) -> (f64, f64) {
        let len = self.len();
        (0..len).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < len { self.off[i].abs() } else { 0.0 };
            (lo.min(self.diag[i] - left - right), hi.max(self.diag[i] + left + right))
        })
    }

    /// Bracket `[lo, hi]` of the `k`-th smallest eigenvalue (0-based) of width
    /// at most a few ulps of the spectral radius.
    pub fn eigenvalue_bracket(&self, k: usize) -> Result<(f64, f64)> {
        if k >= self.len() {
            return Err(Error::invalid(format!("eigenvalue index {k} out of range")));
        }
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs());
        lo -= f64::EPSILON * scale;
        hi += f64::EPSILON * scale;
        for _ in 0..256 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 2.0 * f64::EPSILON * mid.abs() {
                return Ok((lo, hi));
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Err(Error::NonConvergence("Sturm bisection did not converge".into()))
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let len = self.len();
        (0..len)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < len {
                    v += self.off[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// Solves `(T - μI) x = b` by `LDLᵀ`, requiring every pivot to be
    /// positive (i.e. `μ` below the spectrum).
    pub fn solve_shifted_spd(&self, mu: f64, b: &[f64]) -> Result<Vec<f64>> {
        let len = self.len();
        let mut d = vec![0.0; len];
        let mut z = vec![0.0; len];
        for i in 0..len {
            let (l, coupling, prev) = if i == 0 {
                (0.0, 0.0, 0.0)
            } else {
                (self.off[i - 1] / d[i - 1], self.off[i - 1], z[i - 1])
            };
            d[i] = self.diag[i] - mu - l * coupling;
            if !(d[i] > 0.0) {
                return Err(Error::NonConvergence(format!("shift {mu} is not below the spectrum (pivot {i})")));
            }
            z[i] = b[i] - l * prev;
        }
        let mut x = vec![0.0; len];
        for i in (0..len).rev() {
            let next = if i + 1 < len { self.off[i] * x[i + 1] } else { 0.0 };
            x[i] = (z[i] - next) / d[i];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(m: usize) -> SymTridiagonal {
        SymTridiagonal::new(vec![2.0; m], vec![-1.0; m - 1]).unwrap()
    }

    fn exact(m: usize, k: usize) -> f64 {
        let t = (k + 1) as f64 * std::f64::consts::PI / (2.0 * (m + 1) as f64);
        4.0 * t.sin().powi(2)
    }

    #[test]
    fn bisection_matches_closed_form() {
        let t = laplacian(200);
        for k in [0, 1, 57, 199] {
            let (lo, hi) = t.eigenvalue_bracket(k).unwrap();
            let e = exact(200, k);
            assert!(lo <= e + 1e-14 && hi >= e - 1e-14, "{k}: [{lo}, {hi}] vs {e}");
        }
        assert_eq!(t.count_below(0.0), 0);
        assert_eq!(t.count_below(4.0), 200);
    }

    #[test]
    fn shifted_solve_inverts() {
        let t = laplacian(50);
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let x = t.solve_shifted_spd(-0.5, &b).unwrap();
        let back = t.apply(&x);
        for i in 0..50 {
            assert!((back[i] + 0.5 * x[i] - b[i]).abs() < 1e-12);
        }
        assert!(t.solve_shifted_spd(1.0, &b).is_err());
    }
}
