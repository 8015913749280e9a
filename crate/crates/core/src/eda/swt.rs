//! Undecimated (stationary) Haar wavelet transform and steep-rise artifact
//! suppression.
//!
//! The transform runs on a symmetric extension of the input (the signal
//! followed by its mirror image, then edge-held up to a multiple of
//! `2^levels`), treated as periodic. The extension has no wrap-around jump,
//! so a step in the signal only produces detail energy near the step.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TimeSeries;

pub const MIN_DENOISE_LEN: usize = 16;
pub const MAX_DENOISE_LEVELS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwtDecomposition {
    pub levels: usize,
    /// Approximation coefficients per level (index 0 = level 1), extended length.
    pub approx_coeffs: Vec<Vec<f64>>,
    /// Detail coefficients per level, extended length.
    pub detail_coeffs: Vec<Vec<f64>>,
    /// Number of leading coefficients that correspond to input samples.
    pub signal_len: usize,
    pub rate_hz: f64,
    pub t0: f64,
}

fn floor_log2(n: usize) -> usize {
    (usize::BITS - 1 - n.leading_zeros()) as usize
}

pub fn swt_forward(x: &TimeSeries, levels: usize) -> Result<SwtDecomposition> {
    let n = x.len();
    if levels == 0 {
        return Err(Error::invalid("wavelet levels must be at least 1"));
    }
    let max_levels = floor_log2(n.max(1));
    if levels > max_levels {
        return Err(Error::invalid(format!(
            "{levels} wavelet levels exceed log2 of the {n}-sample signal ({max_levels})"
        )));
    }
    let block = 1usize << levels;
    let ext_len = (2 * n).div_ceil(block) * block;
    let mut ext: Vec<f64> = x.samples().to_vec();
    ext.extend(x.samples().iter().rev());
    ext.resize(ext_len, x.samples()[0]);

    let mut approx_coeffs = Vec::with_capacity(levels);
    let mut detail_coeffs = Vec::with_capacity(levels);
    let mut current = ext;
    for j in 0..levels {
        let step = 1usize << j;
        let m = current.len();
        let mut a = vec![0.0; m];
        let mut d = vec![0.0; m];
        for i in 0..m {
            let next = current[(i + step) % m];
            a[i] = (current[i] + next) / SQRT_2;
            d[i] = (current[i] - next) / SQRT_2;
        }
        detail_coeffs.push(d);
        approx_coeffs.push(a.clone());
        current = a;
    }
    Ok(SwtDecomposition {
        levels,
        approx_coeffs,
        detail_coeffs,
        signal_len: n,
        rate_hz: x.rate_hz(),
        t0: x.t0(),
    })
}

/// Inverse transform starting from the coarsest approximation and the
/// (possibly modified) detail coefficients.
pub fn swt_inverse(dec: &SwtDecomposition) -> Result<TimeSeries> {
    let mut current = dec
        .approx_coeffs
        .last()
        .cloned()
        .ok_or_else(|| Error::invalid("empty wavelet decomposition"))?;
    for j in (0..dec.levels).rev() {
        let step = 1usize << j;
        let d = &dec.detail_coeffs[j];
        let m = current.len();
        let mut prev = vec![0.0; m];
        for (i, p) in prev.iter_mut().enumerate() {
            let back = (i + m - step % m) % m;
            let from_here = (current[i] + d[i]) / SQRT_2;
            let from_back = (current[back] - d[back]) / SQRT_2;
            *p = 0.5 * (from_here + from_back);
        }
        current = prev;
    }
    current.truncate(dec.signal_len);
    TimeSeries::new(current, dec.rate_hz, dec.t0)
}

/// Median absolute deviation based noise scale of one coefficient band.
fn robust_sigma(band: &[f64]) -> f64 {
    let mut abs: Vec<f64> = band.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let m = abs.len();
    let median = if m % 2 == 1 { abs[m / 2] } else { 0.5 * (abs[m / 2 - 1] + abs[m / 2]) };
    median / 0.6745
}

/// Steep-rise artifact suppression.
///
/// Each detail band gets the universal threshold `sigma * sqrt(2 ln N)` with
/// a MAD noise estimate. Coefficients inside the band's bulk distribution are
/// kept as signal; the part of any coefficient that sticks out beyond the
/// threshold is treated as artifact and removed, i.e. each coefficient is
/// replaced by `d - soft(d, T)`, which is `d` clipped to `[-T, T]`.
/// Samples whose input was non-negative are clamped at zero.
pub fn swt_denoise(x: &TimeSeries) -> Result<TimeSeries> {
    let n = x.len();
    if n < MIN_DENOISE_LEN {
        return Err(Error::TooShort { needed: MIN_DENOISE_LEN, got: n });
    }
    let levels = MAX_DENOISE_LEVELS.min(floor_log2(n));
    let mut dec = swt_forward(x, levels)?;
    let universal = (2.0 * (n as f64).ln()).sqrt();
    for band in dec.detail_coeffs.iter_mut() {
        // Thresholds are estimated on the coefficients of the actual signal,
        // not the mirrored extension.
        let threshold = robust_sigma(&band[..n]) * universal;
        for v in band.iter_mut() {
            *v = v.clamp(-threshold, threshold);
        }
    }
    let rec = swt_inverse(&dec)?;
    let out = rec
        .samples()
        .iter()
        .zip(x.samples())
        .map(|(&r, &orig)| if orig >= 0.0 { r.max(0.0) } else { r })
        .collect();
    x.with_samples(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(v: Vec<f64>) -> TimeSeries {
        TimeSeries::new(v, 4.0, 0.0).unwrap()
    }

    fn rmse(a: &[f64], b: &[f64]) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn perfect_reconstruction() {
        let x: Vec<f64> = (0..101).map(|i| ((i * 37 % 17) as f64).sin() + 0.01 * i as f64).collect();
        for levels in 1..=6 {
            let dec = swt_forward(&ts(x.clone()), levels).unwrap();
            assert_eq!(dec.approx_coeffs[0].len() % (1 << levels), 0);
            let y = swt_inverse(&dec).unwrap();
            for (a, b) in x.iter().zip(y.samples()) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn constant_has_no_detail() {
        let dec = swt_forward(&ts(vec![3.5; 50]), 4).unwrap();
        for band in &dec.detail_coeffs {
            assert!(band.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn step_detail_is_local() {
        // Level-1 Haar detail d[i] = (x[i] - x[i+1]) / sqrt(2): the only
        // non-zero entry over the signal is at the last pre-step sample.
        let x: Vec<f64> = (0..32).map(|i| if i < 12 { 0.0 } else { 1.0 }).collect();
        let dec = swt_forward(&ts(x), 1).unwrap();
        let d = &dec.detail_coeffs[0][..32];
        for (i, v) in d.iter().enumerate() {
            if i == 11 {
                assert!((v + 1.0 / SQRT_2).abs() < 1e-12);
            } else {
                assert_eq!(*v, 0.0, "index {i}");
            }
        }
    }

    #[test]
    fn too_many_levels_rejected() {
        assert!(swt_forward(&ts(vec![0.0; 16]), 5).is_err());
        assert!(swt_forward(&ts(vec![0.0; 16]), 4).is_ok());
        assert!(swt_forward(&ts(vec![0.0; 16]), 0).is_err());
    }

    #[test]
    fn denoise_examples() {
        let ramp: Vec<f64> = (0..240).map(|i| i as f64 / 239.0).collect();
        let out = swt_denoise(&ts(ramp.clone())).unwrap();
        assert!(rmse(out.samples(), &ramp) < 0.02);

        let mut spiky = ramp.clone();
        spiky[120] += 5.0;
        let out = swt_denoise(&ts(spiky)).unwrap();
        let residual = (out.samples()[120] - ramp[120]).abs();
        assert!(residual <= 0.2 * 5.0, "residual spike {residual}");

        let zero = swt_denoise(&ts(vec![0.0; 64])).unwrap();
        assert!(zero.samples().iter().all(|&v| v == 0.0));
        assert!(matches!(swt_denoise(&ts(vec![0.0; 15])), Err(Error::TooShort { .. })));
    }
}
