//! l1-regularised deconvolution by a known kernel (FISTA).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100_000;
pub const TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeconvResult {
    /// Approximately sparse factor.
    pub asf: Vec<f64>,
    /// `|h * x - y| / |y|` (0 for a zero target).
    pub reconstruction_error: f64,
    pub objective: f64,
    pub iterations: usize,
}

/// Causal convolution truncated to the length of `x`.
pub fn convolve(h: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    for (k, &hk) in h.iter().enumerate().take(n) {
        for (o, xv) in out[k..].iter_mut().zip(x) {
            *o += hk * xv;
        }
    }
    out
}

/// Adjoint of [`convolve`].
pub fn correlate(h: &[f64], r: &[f64]) -> Vec<f64> {
    let n = r.len();
    let mut out = vec![0.0; n];
    for (k, &hk) in h.iter().enumerate().take(n) {
        for (o, rv) in out.iter_mut().zip(&r[k..]) {
            *o += hk * rv;
        }
    }
    out
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn objective(h: &[f64], y: &[f64], x: &[f64], lambda: f64) -> f64 {
    let r: f64 = convolve(h, x).iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    0.5 * r + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// Squared spectral norm of the truncated convolution, by power iteration.
fn lipschitz(h: &[f64], n: usize) -> f64 {
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.37).sin() * 0.1).collect();
    let mut est = 0.0;
    for _ in 0..60 {
        let w = correlate(h, &convolve(h, &v));
        let nw = norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        est = nw / norm(&v);
        v = w.into_iter().map(|x| x / nw).collect();
    }
    // power iteration approaches from below
    est * 1.01
}

/// `argmin_x 1/2 |h * x - y|^2 + lambda |x|_1`. Stops when the gradient
/// mapping falls below [`TOLERANCE`] times `|h^T y|`.
pub fn sparse_deconvolve(y: &[f64], h: &[f64], lambda: f64) -> Result<DeconvResult> {
    if h.iter().all(|&v| v == 0.0) || h.is_empty() {
        return Err(Error::invalid("deconvolution kernel is zero"));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("equaliser lambda must be positive"));
    }
    let n = y.len();
    let step = 1.0 / lipschitz(h, n).max(1e-300);
    let scale = norm(&correlate(h, y));
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut converged = scale == 0.0;
    while !converged {
        iterations += 1;
        if iterations > MAX_ITERATIONS {
            let r = norm(&convolve(h, &x).iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>());
            return Err(Error::NoConvergence { iterations: MAX_ITERATIONS, residual: r });
        }
        let resid: Vec<f64> = convolve(h, &z).iter().zip(y).map(|(a, b)| a - b).collect();
        let grad = correlate(h, &resid);
        let next: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| soft(zi - step * gi, step * lambda)).collect();
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let delta: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        // gradient mapping at z
        let mapping = z.iter().zip(&next).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / step;
        // restart momentum when it points uphill
        let uphill: f64 = delta.iter().zip(z.iter().zip(&next)).map(|(d, (zi, ni))| d * (zi - ni)).sum();
        if uphill > 0.0 {
            t = 1.0;
            z.clone_from(&next);
        } else {
            let beta = (t - 1.0) / t_next;
            z = next.iter().zip(&delta).map(|(ni, di)| ni + beta * di).collect();
            t = t_next;
        }
        x = next;
        converged = mapping <= TOLERANCE * scale;
    }
    let obj = objective(h, y, &x, lambda);
    debug_assert!({
        let zero = objective(h, y, &vec![0.0; n], lambda);
        obj <= zero * (1.0 + 1e-6) + 1e-12
    });
    debug_assert!(h[0] == 0.0 || {
        let ls = least_squares_inverse(h, y);
        let thresholded: Vec<f64> = ls.iter().map(|v| soft(*v, lambda)).collect();
        let other = objective(h, y, &thresholded, lambda);
        !other.is_finite() || obj <= other * (1.0 + 1e-4) + 1e-9
    });
    let yn = norm(y);
    let reconstruction_error = if yn == 0.0 {
        0.0
    } else {
        norm(&convolve(h, &x).iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>()) / yn
    };
    Ok(DeconvResult { asf: x, reconstruction_error, objective: obj, iterations })
}

/// Exact inverse of the truncated convolution by forward substitution.
pub fn least_squares_inverse(h: &[f64], y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; y.len()];
    for i in 0..y.len() {
        let acc: f64 = (1..h.len().min(i + 1)).map(|k| h[k] * x[i - k]).sum();
        x[i] = (y[i] - acc) / h[0];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjoint_pair() {
        let h = [0.5, -1.0, 2.0];
        let x = [1.0, 2.0, -1.0, 0.5, 3.0];
        let r = [0.3, -0.2, 1.0, 2.0, -1.0];
        let lhs: f64 = convolve(&h, &x).iter().zip(&r).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(correlate(&h, &r)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn identity_kernel() {
        let y = [0.5, -1.0, 2.0, 0.0, 3.0];
        let out = sparse_deconvolve(&y, &[1.0], 1e-9).unwrap();
        for (a, b) in out.asf.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_target() {
        let out = sparse_deconvolve(&[0.0; 32], &[1.0, 0.5, 0.25], 0.1).unwrap();
        assert!(out.asf.iter().all(|&v| v == 0.0));
        assert_eq!(out.reconstruction_error, 0.0);
    }

    #[test]
    fn spikes_recovered() {
        let h: Vec<f64> = (0..12).map(|k| (-(k as f64) / 3.0).exp() * (1.0 + 0.5 * (k as f64).sin())).collect();
        let mut truth = vec![0.0; 80];
        truth[10] = 1.0;
        truth[33] = -0.7;
        truth[60] = 1.4;
        let y = convolve(&h, &truth);
        let out = sparse_deconvolve(&y, &h, 1e-4).unwrap();
        let big: Vec<usize> = (0..80).filter(|&i| out.asf[i].abs() > 0.1).collect();
        assert_eq!(big, vec![10, 33, 60]);
        for &i in &big {
            assert!((out.asf[i] - truth[i]).abs() <= 0.05 * truth[i].abs());
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(sparse_deconvolve(&[1.0], &[0.0, 0.0], 0.1).is_err());
        assert!(sparse_deconvolve(&[1.0], &[1.0], 0.0).is_err());
    }
}
