//! Butterworth low-pass (second-order sections, zero-phase), Hann smoothing
//! and Gaussian-derivative filtering.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{reflect_pad, TimeSeries};
use crate::error::{Error, Result};

pub const MAX_BUTTERWORTH_ORDER: usize = 12;

/// One biquad: `b0 + b1 z^-1 + b2 z^-2 / 1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }

    /// Transposed direct form II state giving a steady output for a constant
    /// unit input.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let s2 = self.b[2] - self.a[2] * g;
        let s1 = self.b[1] - self.a[1] * g + s2;
        [s1, s2]
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Digital Butterworth low-pass via the bilinear transform with
    /// frequency prewarping, so the -3 dB point lands exactly on `cutoff_hz`.
    pub fn butterworth_lowpass(order: usize, cutoff_hz: f64, rate_hz: f64) -> Result<Self> {
        if !(1..=MAX_BUTTERWORTH_ORDER).contains(&order) {
            return Err(Error::invalid(format!(
                "Butterworth order must be in 1..={MAX_BUTTERWORTH_ORDER}, got {order}"
            )));
        }
        let nyquist_hz = rate_hz / 2.0;
        if !(cutoff_hz > 0.0) {
            return Err(Error::invalid(format!("cutoff must be positive, got {cutoff_hz}")));
        }
        if cutoff_hz >= nyquist_hz {
            return Err(Error::AboveNyquist { cutoff_hz, nyquist_hz });
        }
        let fs2 = 2.0 * rate_hz;
        let warped = fs2 * (PI * cutoff_hz / rate_hz).tan();
        let to_z = |s: Complex64| (fs2 + s) / (fs2 - s);

        let n = order as f64;
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for k in 0..order / 2 {
            let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
            let zp = to_z(Complex64::from_polar(warped, theta));
            let a1 = -2.0 * zp.re;
            let a2 = zp.norm_sqr();
            let g = (1.0 + a1 + a2) / 4.0;
            sections.push(Biquad { b: [g, 2.0 * g, g], a: [1.0, a1, a2] });
        }
        if order % 2 == 1 {
            let zr = to_z(Complex64::new(-warped, 0.0)).re;
            let g = (1.0 - zr) / 2.0;
            sections.push(Biquad { b: [g, g, 0.0], a: [1.0, -zr, 0.0] });
        }
        Ok(Self { sections })
    }

    /// Causal single-pass filtering from rest.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            run_section(s, &mut y, [0.0, 0.0]);
        }
        y
    }

    /// Causal filtering with every section started in its steady state for a
    /// constant input equal to `x[0]`.
    fn filter_steady(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut level = x.first().copied().unwrap_or(0.0);
        for s in &self.sections {
            let zi = s.step_state();
            run_section(s, &mut y, [zi[0] * level, zi[1] * level]);
            level *= s.dc_gain();
        }
        y
    }

    /// Forward-backward (zero-phase) filtering with odd extension at both ends.
    pub fn filtfilt(&self, x: &[f64], padlen: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = padlen.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend_from_slice(x);
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }
        let mut y = self.filter_steady(&ext);
        y.reverse();
        let mut y = self.filter_steady(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }

    /// Magnitude of the frequency response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, rate_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / rate_hz;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .map(|s| {
                let num = s.b[0] + s.b[1] * z1 + s.b[2] * z2;
                let den = s.a[0] + s.a[1] * z1 + s.a[2] * z2;
                (num / den).norm()
            })
            .product()
    }
}

fn run_section(s: &Biquad, y: &mut [f64], state: [f64; 2]) {
    let [mut s1, mut s2] = state;
    for v in y.iter_mut() {
        let x = *v;
        let out = s.b[0] * x + s1;
        s1 = s.b[1] * x - s.a[1] * out + s2;
        s2 = s.b[2] * x - s.a[2] * out;
        *v = out;
    }
}

/// Zero-phase Butterworth low-pass.
pub fn butterworth_lowpass(x: &TimeSeries, cutoff_hz: f64, order: usize) -> Result<TimeSeries> {
    let sos = Sos::butterworth_lowpass(order, cutoff_hz, x.rate_hz())?;
    let ntaps = 2 * sos.sections.len() + 1;
    let transient = (3.0 * x.rate_hz() / cutoff_hz).ceil() as usize;
    let padlen = (3 * ntaps).max(transient);
    x.with_samples(sos.filtfilt(x.samples(), padlen))
}

/// Hann window of `len` points with the zero end points excluded.
pub fn hann_kernel(len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * PI * (n + 1) as f64 / (len + 1) as f64).cos()))
        .collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|v| v / sum).collect()
}

/// Convolution with a unit-sum Hann kernel. Kernel tap `k` weighs sample
/// `i + k - (len - 1) / 2`; edges are reflect-padded.
pub fn hanning_smooth(x: &TimeSeries, window_len: usize) -> Result<TimeSeries> {
    if window_len < 2 {
        return Err(Error::invalid(format!("Hann window must span at least 2 samples, got {window_len}")));
    }
    if window_len > x.len() {
        return Err(Error::invalid(format!(
            "Hann window of {window_len} samples is longer than the {}-sample signal",
            x.len()
        )));
    }
    let kernel = hann_kernel(window_len);
    let center = (window_len - 1) / 2;
    let padded = reflect_pad(x.samples(), window_len);
    let out = (0..x.len())
        .map(|i| {
            let base = i + window_len - center;
            kernel.iter().enumerate().map(|(k, w)| w * padded[base + k]).sum()
        })
        .collect();
    x.with_samples(out)
}

/// Derivative (units per second) of the Gaussian-smoothed signal.
///
/// The sampled derivative-of-Gaussian kernel is scaled so that a linear ramp
/// of slope `s` maps to exactly `s` away from the edges.
pub fn gaussian_smooth_derivative(x: &TimeSeries, sigma_s: f64) -> Result<TimeSeries> {
    if !(sigma_s > 0.0 && sigma_s.is_finite()) {
        return Err(Error::invalid(format!("Gaussian sigma must be positive, got {sigma_s}")));
    }
    let dt = x.dt();
    let radius = ((4.0 * sigma_s / dt).ceil() as usize).max(1);
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r)
        .map(|j| {
            let t = j as f64 * dt;
            -t * (-(t * t) / (2.0 * sigma_s * sigma_s)).exp()
        })
        .collect();
    let moment: f64 = (-r..=r).zip(&raw).map(|(j, w)| j as f64 * w).sum();
    let scale = -1.0 / (dt * moment);
    let kernel: Vec<f64> = raw.iter().map(|w| w * scale).collect();

    // y[i] = sum_j kernel[j] * x[i - j]
    let padded = reflect_pad(x.samples(), radius);
    let out = (0..x.len())
        .map(|i| {
            let c = i + radius;
            (-r..=r)
                .zip(&kernel)
                .map(|(j, w)| w * padded[(c as isize - j) as usize])
                .sum()
        })
        .collect();
    x.with_samples(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: f64, secs: f64, amp: f64) -> TimeSeries {
        let n = (rate * secs) as usize;
        let s = (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / rate).sin()).collect();
        TimeSeries::new(s, rate, 0.0).unwrap()
    }

    fn peak_abs(x: &[f64]) -> f64 {
        x.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    #[test]
    fn dc_passthrough() {
        let x = TimeSeries::new(vec![1.0; 300], 64.0, 0.0).unwrap();
        let y = butterworth_lowpass(&x, 5.0, 8).unwrap();
        for v in y.samples() {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn analytic_magnitude_response() {
        let sos = Sos::butterworth_lowpass(8, 5.0, 64.0).unwrap();
        assert!((sos.magnitude(5.0, 64.0) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!((sos.magnitude(0.0, 64.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_pass_gain_at_cutoff() {
        let rate = 64.0;
        let x = sine(5.0, rate, 20.0, 1.0);
        let sos = Sos::butterworth_lowpass(8, 5.0, rate).unwrap();
        let y = sos.filter(x.samples());
        let gain = peak_abs(&y[640..]);
        assert!((gain - 0.5f64.sqrt()).abs() < 0.02, "gain {gain}");
    }

    #[test]
    fn stopband_at_four_times_cutoff() {
        let rate = 64.0;
        let x = sine(12.0, rate, 20.0, 1.0);
        let sos = Sos::butterworth_lowpass(8, 3.0, rate).unwrap();
        let y = sos.filter(x.samples());
        assert!(peak_abs(&y[640..]) < 1e-4);
        let y = butterworth_lowpass(&x, 3.0, 8).unwrap();
        assert!(peak_abs(&y.samples()[200..1000]) < 1e-4);
    }

    #[test]
    fn nyquist_rejected_with_both_frequencies() {
        let x = TimeSeries::new(vec![0.0; 100], 4.0, 0.0).unwrap();
        let err = butterworth_lowpass(&x, 5.0, 5).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("5 Hz") && msg.contains("2 Hz"), "{msg}");
        assert!(butterworth_lowpass(&x, 1.0, 13).is_err());
    }

    #[test]
    fn zero_phase_pulse_alignment() {
        let rate = 64.0;
        let n = 512;
        let center = 256.0;
        let pulse: Vec<f64> = (0..n)
            .map(|i| (-((i as f64 - center) / 6.0).powi(2)).exp())
            .collect();
        let x = TimeSeries::new(pulse.clone(), rate, 0.0).unwrap();
        let y = butterworth_lowpass(&x, 4.0, 8).unwrap();
        let best_lag = (-20isize..=20)
            .max_by(|&a, &b| xcorr(&pulse, y.samples(), a).total_cmp(&xcorr(&pulse, y.samples(), b)))
            .unwrap();
        assert_eq!(best_lag, 0);
    }

    fn xcorr(a: &[f64], b: &[f64], lag: isize) -> f64 {
        (0..a.len() as isize)
            .filter_map(|i| {
                let j = i + lag;
                (j >= 0 && (j as usize) < b.len()).then(|| a[i as usize] * b[j as usize])
            })
            .sum()
    }

    #[test]
    fn hann_constant_and_impulse() {
        let x = TimeSeries::new(vec![2.0; 20], 4.0, 0.0).unwrap();
        for v in hanning_smooth(&x, 4).unwrap().samples() {
            assert!((v - 2.0).abs() < 1e-12);
        }
        let mut imp = vec![0.0; 21];
        imp[10] = 1.0;
        let y = hanning_smooth(&TimeSeries::new(imp, 4.0, 0.0).unwrap(), 4).unwrap();
        // kernel by hand: sin^2(pi k / 5) for k = 1..4, normalised by 2.5
        let s1 = (PI / 5.0).sin().powi(2) / 2.5;
        let s2 = (2.0 * PI / 5.0).sin().powi(2) / 2.5;
        let expected = [s1, s2, s2, s1];
        for (k, e) in expected.iter().enumerate() {
            assert!((y.samples()[8 + k] - e).abs() < 1e-12);
        }
        assert_eq!(y.samples()[7], 0.0);
        assert_eq!(y.samples()[12], 0.0);
    }

    #[test]
    fn hann_suppresses_nyquist() {
        let alt: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let y = hanning_smooth(&TimeSeries::new(alt, 4.0, 0.0).unwrap(), 4).unwrap();
        assert!(peak_abs(y.samples()) < 0.3);
    }

    #[test]
    fn hann_window_validation() {
        let x = TimeSeries::new(vec![1.0; 3], 4.0, 0.0).unwrap();
        assert!(hanning_smooth(&x, 4).is_err());
        assert!(hanning_smooth(&x, 1).is_err());
    }

    #[test]
    fn gaussian_derivative_cases() {
        let c = TimeSeries::new(vec![3.0; 100], 64.0, 0.0).unwrap();
        for v in gaussian_smooth_derivative(&c, 0.05).unwrap().samples() {
            assert!(v.abs() < 1e-12);
        }
        let ramp: Vec<f64> = (0..200).map(|i| 2.0 * i as f64 / 64.0).collect();
        let d = gaussian_smooth_derivative(&TimeSeries::new(ramp, 64.0, 0.0).unwrap(), 0.05).unwrap();
        for v in &d.samples()[20..180] {
            assert!((v - 2.0).abs() < 0.02, "{v}");
        }
        let s = sine(1.0, 64.0, 4.0, 1.0);
        let d = gaussian_smooth_derivative(&s, 0.02).unwrap();
        let amp = peak_abs(&d.samples()[32..224]);
        assert!((amp - 2.0 * PI).abs() / (2.0 * PI) < 0.02, "{amp}");
        assert!(gaussian_smooth_derivative(&s, 0.0).is_err());
    }
}
