//! Characteristic polynomial of the Emden–Fowler ODE linearized at its
//! equilibrium.

use serde::{Deserialize, Serialize};

use crate::problem::{decay_exponent, q_of_alpha};

/// `𝒫(λ) = p Q(k) - Q(k - λ)` with `k = 2/(p-1)`, which expands to
/// `λ² + (n-2-2k) λ + (p-1) Q(k)`.
pub fn ef_characteristic(n: u32, p: f64, lambda: f64) -> f64 {
    let k = decay_exponent(p);
    p * q_of_alpha(n, k) - q_of_alpha(n, k - lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CharacteristicRoots {
    Real { low: f64, high: f64 },
    Complex { re: f64, im: f64 },
}

impl CharacteristicRoots {
    pub fn max_real_part(&self) -> f64 {
        match *self {
            CharacteristicRoots::Real { high, .. } => high,
            CharacteristicRoots::Complex { re, .. } => re,
        }
    }

    pub fn both_negative(&self) -> bool {
        self.max_real_part() < 0.0
    }
}

pub fn ef_characteristic_roots(n: u32, p: f64) -> CharacteristicRoots {
    let k = decay_exponent(p);
    let b = n as f64 - 2.0 - 2.0 * k;
    let c = (p - 1.0) * q_of_alpha(n, k);
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // Cancellation-free pair via Vieta.
        let q = -0.5 * (b + b.signum() * s);
        let (r1, r2) = if q == 0.0 { (0.0, -b) } else { (q, c / q) };
        CharacteristicRoots::Real { low: r1.min(r2), high: r1.max(r2) }
    } else {
        CharacteristicRoots::Complex { re: -0.5 * b, im: 0.5 * (-disc).sqrt() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{hardy_constant, script_q, sobolev_exponent};
    use proptest::prelude::*;

    #[test]
    fn values_for_n13_p3() {
        assert!((ef_characteristic(13, 3.0, 0.0) - 20.0).abs() < 1e-12);
        let lambda_star = 1.0 - 11.0 / 2.0;
        assert!((ef_characteristic(13, 3.0, lambda_star) + 0.25).abs() < 1e-12);
        assert_eq!(ef_characteristic_roots(13, 3.0), CharacteristicRoots::Real { low: -5.0, high: -4.0 });
    }

    proptest! {
        #[test]
        fn value_at_zero(n in 3u32..30, p in 1.01f64..20.0) {
            let k = decay_exponent(p);
            let v = ef_characteristic(n, p, 0.0);
            prop_assert!((v - (p - 1.0) * q_of_alpha(n, k)).abs() <= 1e-10 * (1.0 + v.abs()));
        }

        #[test]
        fn roots_are_roots(n in 3u32..30, p in 1.01f64..20.0) {
            let scale = 1.0 + ef_characteristic(n, p, 0.0).abs();
            match ef_characteristic_roots(n, p) {
                CharacteristicRoots::Real { low, high } => {
                    prop_assert!(ef_characteristic(n, p, low).abs() <= 1e-9 * scale * (1.0 + low * low));
                    prop_assert!(ef_characteristic(n, p, high).abs() <= 1e-9 * scale * (1.0 + high * high));
                }
                CharacteristicRoots::Complex { re, im } => {
                    // Re 𝒫(re + i im) = re² - im² + b re + c and Im = 2 re im + b im.
                    let k = decay_exponent(p);
                    let b = n as f64 - 2.0 - 2.0 * k;
                    prop_assert!((2.0 * re + b).abs() < 1e-12 * (1.0 + b.abs()));
                    prop_assert!(im > 0.0);
                }
            }
        }

        #[test]
        fn stable_side_has_two_negative_roots(n in 11u32..30, t in 0.0f64..1.0) {
            let sob = sobolev_exponent(n).unwrap();
            let p = sob + 0.01 + t * 20.0;
            prop_assume!(script_q(n, p) > 0.0);
            let k = decay_exponent(p);
            let lambda_star = k - (n as f64 - 2.0) / 2.0;
            prop_assert!(ef_characteristic(n, p, lambda_star) <= 1e-12);
            prop_assert!(p * q_of_alpha(n, k) <= hardy_constant(n).unwrap() + 1e-9);
            let roots = ef_characteristic_roots(n, p);
            prop_assert!(matches!(roots, CharacteristicRoots::Real { .. }), "{:?}", roots);
            prop_assert!(roots.both_negative());
        }
    }
}
