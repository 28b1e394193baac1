//! Small dense least-squares fits.

use crate::error::{Error, Result};

/// Solves `min ‖Σ_j c_j cols[j] - y‖₂` by modified Gram–Schmidt.
pub fn least_squares(cols: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let m = cols.len();
    if m == 0 || y.len() < m || cols.iter().any(|c| c.len() != y.len()) {
        return Err(Error::invalid("least squares needs at least as many rows as columns"));
    }
    let mut q: Vec<Vec<f64>> = cols.to_vec();
    let mut r = vec![vec![0.0; m]; m];
    for j in 0..m {
        for i in 0..j {
            let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = dot;
            let (head, tail) = q.split_at_mut(j);
            for (x, qi) in tail[0].iter_mut().zip(&head[i]) {
                *x -= dot * qi;
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::NonConvergence("rank-deficient fit".into()));
        }
        r[j][j] = norm;
        q[j].iter_mut().for_each(|v| *v /= norm);
    }
    let qty: Vec<f64> = q.iter().map(|qj| qj.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
    let mut c = vec![0.0; m];
    for j in (0..m).rev() {
        let s: f64 = ((j + 1)..m).map(|k| r[j][k] * c[k]).sum();
        c[j] = (qty[j] - s) / r[j][j];
    }
    Ok(c)
}

/// Slope of the least-squares line through `(x, y)`.
pub fn slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("slope fit needs two or more points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("slope fit needs distinct abscissae"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_model() {
        let x: Vec<f64> = (0..50).map(|i| 1.0 + i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v.powf(-1.5)).collect();
        let c = least_squares(&[vec![1.0; 50], x.iter().map(|v| v.powf(-1.5)).collect()], &y).unwrap();
        assert!((c[0] - 3.0).abs() < 1e-12 && (c[1] + 2.0).abs() < 1e-12);
        assert!((slope(&x, &y.iter().map(|_| 0.0).collect::<Vec<_>>()).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(least_squares(&[vec![0.0; 4]], &[1.0; 4]).is_err());
        assert!(slope(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }
}
