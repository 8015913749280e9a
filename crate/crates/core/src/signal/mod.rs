//! Shared signal types and generic DSP primitives.
//!
//! Every pipeline in the crate works on [`TimeSeries`]: a uniformly sampled
//! scalar signal with a sampling rate and a start epoch. The submodules hold
//! the filters ([`filter`]) and the event detectors ([`peaks`]).

pub mod filter;
pub mod peaks;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filter::{butterworth_lowpass, gaussian_smooth_derivative, hanning_smooth, Sos};
pub use peaks::{find_peaks, zero_crossings};

/// Uniformly sampled scalar signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    samples: Vec<f64>,
    rate_hz: f64,
    t0: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, rate_hz: f64, t0: f64) -> Result<Self> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(Error::invalid(format!("sampling rate must be positive, got {rate_hz}")));
        }
        if samples.is_empty() {
            return Err(Error::invalid("time series must contain at least one sample"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("start epoch must be finite"));
        }
        Ok(Self { samples, rate_hz, t0 })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    /// Epoch time of sample `i`.
    pub fn time_of(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz
    }

    /// Same rate and epoch, new samples. Lengths may differ.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, self.rate_hz, self.t0)
    }

    /// Half-open sample index range covered by `w`, clipped to the signal.
    pub fn index_range(&self, w: &Window) -> Result<std::ops::Range<usize>> {
        let n = self.samples.len();
        let lo = ((w.start_s - self.t0) * self.rate_hz).ceil().max(0.0);
        let hi = ((w.end_s - self.t0) * self.rate_hz).ceil().min(n as f64);
        if hi <= lo {
            return Err(Error::EmptyWindow { start_s: w.start_s, end_s: w.end_s });
        }
        Ok(lo as usize..hi as usize)
    }
}

/// Half-open time interval `[start_s, end_s)` in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_s: f64,
    pub end_s: f64,
}

impl Window {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self> {
        if !(start_s.is_finite() && end_s.is_finite()) || end_s <= start_s {
            return Err(Error::invalid(format!("window end {end_s} must exceed start {start_s}")));
        }
        Ok(Self { start_s, end_s })
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }
}

/// Reflect-pads `x` by `pad` samples on both sides, mirroring about the edge
/// samples without repeating them. Short inputs are reflected repeatedly.
pub(crate) fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len() as isize;
    if n == 1 {
        return vec![x[0]; x.len() + 2 * pad];
    }
    let period = 2 * (n - 1);
    (-(pad as isize)..n + pad as isize)
        .map(|i| {
            let mut j = i.rem_euclid(period);
            if j >= n {
                j = period - j;
            }
            x[j as usize]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_series() {
        assert!(TimeSeries::new(vec![], 4.0, 0.0).is_err());
        assert!(TimeSeries::new(vec![1.0], 0.0, 0.0).is_err());
        assert!(TimeSeries::new(vec![1.0, f64::NAN], 4.0, 0.0).is_err());
    }

    #[test]
    fn window_index_range() {
        let ts = TimeSeries::new(vec![0.0; 40], 4.0, 100.0).unwrap();
        let w = Window::new(101.0, 102.0).unwrap();
        assert_eq!(ts.index_range(&w).unwrap(), 4..8);
        let outside = Window::new(200.0, 201.0).unwrap();
        assert!(matches!(ts.index_range(&outside), Err(Error::EmptyWindow { .. })));
        assert!(Window::new(3.0, 3.0).is_err());
    }

    #[test]
    fn reflect_padding() {
        assert_eq!(reflect_pad(&[1.0, 2.0, 3.0], 2), vec![3.0, 2.0, 1.0, 2.0, 3.0, 2.0, 1.0]);
        assert_eq!(reflect_pad(&[5.0], 1), vec![5.0, 5.0, 5.0]);
    }
}
