//! Periodic moving-average filter for motion artifacts in pulse signals.
//!
//! The pulse is low-passed, cut into periods at the upward crossings of its
//! running mid-level, every period is resampled to a common length and
//! replaced by the average of itself and its neighbours, then resampled
//! back onto its own time base.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Sos, TimeSeries};

pub const MIN_PERIODS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PmafConfig {
    pub cutoff_hz: f64,
    pub order: usize,
    /// Number of periods in the centred average (odd).
    pub span: usize,
    /// Width of the running max/min used for the mid-level.
    pub level_window_s: f64,
    /// Crossings closer than this to the previous boundary are ignored.
    pub min_period_s: f64,
    /// Relative deviation from the median period beyond which a period is
    /// left unaveraged.
    pub max_period_deviation: f64,
    /// Return the input unchanged instead of failing when too few periods
    /// are found.
    pub lenient: bool,
}

impl Default for PmafConfig {
    fn default() -> Self {
        Self { cutoff_hz: 5.0, order: 8, span: 3, level_window_s: 2.0, min_period_s: 0.3, max_period_deviation: 0.3, lenient: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSegmentation {
    /// Sample index at or just before each boundary.
    pub boundaries: Vec<usize>,
    /// Fractional boundary positions in samples.
    pub positions: Vec<f64>,
    pub period_len_samples: usize,
}

/// Midpoint of the running max and min over a centred window.
fn running_mid_level(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let seg = &x[i.saturating_sub(half)..(i + half + 1).min(n)];
            let (lo, hi) = seg.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            0.5 * (lo + hi)
        })
        .collect()
}

pub fn segment_periods(x: &[f64], rate_hz: f64, cfg: &PmafConfig) -> PeriodSegmentation {
    let half = ((cfg.level_window_s * rate_hz) / 2.0).round().max(1.0) as usize;
    let mid = running_mid_level(x, half);
    let d: Vec<f64> = x.iter().zip(&mid).map(|(a, b)| a - b).collect();
    let min_gap = cfg.min_period_s * rate_hz;
    let mut positions: Vec<f64> = Vec::new();
    for i in 0..d.len().saturating_sub(1) {
        if d[i] < 0.0 && d[i + 1] >= 0.0 {
            let pos = i as f64 + d[i] / (d[i] - d[i + 1]);
            if positions.last().is_none_or(|&p| pos - p >= min_gap) {
                positions.push(pos);
            }
        }
    }
    let mut lens: Vec<f64> = positions.windows(2).map(|w| w[1] - w[0]).collect();
    lens.sort_by(f64::total_cmp);
    let period_len_samples = if lens.is_empty() {
        0
    } else {
        let m = lens.len();
        let med = if m % 2 == 1 { lens[m / 2] } else { 0.5 * (lens[m / 2 - 1] + lens[m / 2]) };
        med.round().max(2.0) as usize
    };
    PeriodSegmentation { boundaries: positions.iter().map(|p| p.floor() as usize).collect(), positions, period_len_samples }
}

fn interp(x: &[f64], pos: f64) -> f64 {
    let last = x.len() - 1;
    if pos <= 0.0 {
        return x[0];
    }
    if pos >= last as f64 {
        return x[last];
    }
    let i = pos.floor() as usize;
    let f = pos - i as f64;
    x[i] * (1.0 - f) + x[i + 1] * f
}

pub fn pmaf(x: &TimeSeries) -> Result<TimeSeries> {
    pmaf_with(x, &PmafConfig::default())
}

pub fn pmaf_with(x: &TimeSeries, cfg: &PmafConfig) -> Result<TimeSeries> {
    if cfg.span == 0 || cfg.span % 2 == 0 {
        return Err(Error::invalid("PMAF span must be an odd number of periods"));
    }
    let sos = Sos::butterworth_lowpass(cfg.order, cfg.cutoff_hz, x.rate_hz())?;
    let padlen = (3.0 * x.rate_hz() / cfg.cutoff_hz).ceil() as usize;
    let filtered = sos.filtfilt(x.samples(), padlen);
    let seg = segment_periods(&filtered, x.rate_hz(), cfg);
    let periods = seg.positions.len().saturating_sub(1);
    if periods < MIN_PERIODS {
        if cfg.lenient {
            log::warn!("PMAF found {periods} periods; passing the signal through");
            return Ok(x.clone());
        }
        return Err(Error::TooFewPeriods { found: periods, needed: MIN_PERIODS });
    }
    let len = seg.period_len_samples;
    let pos = &seg.positions;
    let templates: Vec<Vec<f64>> = pos
        .windows(2)
        .map(|w| {
            let step = (w[1] - w[0]) / len as f64;
            (0..=len).map(|j| interp(&filtered, w[0] + j as f64 * step)).collect()
        })
        .collect();
    // Periods far from the typical length are segmentation failures; they
    // keep the low-passed signal and are not used as neighbours.
    let regular: Vec<bool> = pos
        .windows(2)
        .map(|w| ((w[1] - w[0]) / len as f64 - 1.0).abs() <= cfg.max_period_deviation)
        .collect();
    let half = cfg.span / 2;
    let mut out = filtered.clone();
    for k in (0..periods).filter(|&k| regular[k]) {
        let lo = k.saturating_sub(half);
        let hi = (k + half).min(periods - 1);
        let members: Vec<&Vec<f64>> = (lo..=hi).filter(|&m| regular[m]).map(|m| &templates[m]).collect();
        let count = members.len() as f64;
        let avg: Vec<f64> = (0..=len).map(|j| members.iter().map(|t| t[j]).sum::<f64>() / count).collect();
        let (start, end) = (pos[k], pos[k + 1]);
        let mut i = start.ceil() as usize;
        while (i as f64) < end && i < out.len() {
            let phase = (i as f64 - start) / (end - start) * len as f64;
            out[i] = interp(&avg, phase);
            i += 1;
        }
    }
    x.with_samples(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Systolic peak plus a smaller diastolic wave, band-limited well below 5 Hz.
    fn pulse_wave(rate: f64, secs: f64, hz: f64) -> Vec<f64> {
        (0..(rate * secs) as usize)
            .map(|i| {
                let ph = (i as f64 / rate * hz).fract();
                (-((ph - 0.3) / 0.12).powi(2)).exp() + 0.4 * (-((ph - 0.6) / 0.1).powi(2)).exp()
            })
            .collect()
    }

    fn rms(v: impl Iterator<Item = f64>) -> f64 {
        let v: Vec<f64> = v.collect();
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn constant_lenient_passthrough() {
        let x = TimeSeries::new(vec![0.7; 640], 64.0, 0.0).unwrap();
        let lenient = PmafConfig { lenient: true, ..PmafConfig::default() };
        assert_eq!(pmaf_with(&x, &lenient).unwrap(), x);
        assert!(matches!(pmaf(&x), Err(Error::TooFewPeriods { found: 0, .. })));
    }

    #[test]
    fn clean_wave_preserved() {
        let clean = pulse_wave(64.0, 60.0, 1.2);
        let x = TimeSeries::new(clean.clone(), 64.0, 0.0).unwrap();
        let y = pmaf(&x).unwrap();
        let err = rms(clean.iter().zip(y.samples()).map(|(a, b)| a - b));
        assert!(err < 0.03, "rmse {err}");
    }

    #[test]
    fn impulse_artifacts_suppressed() {
        let clean = pulse_wave(64.0, 60.0, 1.2);
        let mut noisy = clean.clone();
        let hits: Vec<usize> = (0..10).map(|k| 200 + k * 353).collect();
        for &h in &hits {
            noisy[h] += 3.0;
        }
        let y = pmaf(&TimeSeries::new(noisy.clone(), 64.0, 0.0).unwrap()).unwrap();
        let before: f64 = hits.iter().map(|&h| (noisy[h] - clean[h]).abs()).sum();
        let after: f64 = hits.iter().map(|&h| (y.samples()[h] - clean[h]).abs()).sum();
        assert!(after <= 0.3 * before, "before {before} after {after}");
    }

    #[test]
    fn segmentation_of_sine() {
        let x: Vec<f64> = (0..640).map(|i| (2.0 * PI * i as f64 / 64.0).sin()).collect();
        let seg = segment_periods(&x, 64.0, &PmafConfig::default());
        assert_eq!(seg.period_len_samples, 64);
        assert!(seg.boundaries.windows(2).all(|w| w[1] > w[0]));
        assert!(seg.positions.len() >= 9);
    }
}
