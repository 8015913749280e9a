//! Beat detection and heart rate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::peaks::prominence;
use crate::signal::{gaussian_smooth_derivative, TimeSeries, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeatConfig {
    pub sigma_s: f64,
    pub min_rr_ms: f64,
    pub max_rr_ms: f64,
    /// Peaks less prominent than this fraction of the 5-95 percentile range
    /// are ignored.
    pub min_rel_prominence: f64,
}

impl Default for BeatConfig {
    fn default() -> Self {
        Self { sigma_s: 0.05, min_rr_ms: 300.0, max_rr_ms: 2000.0, min_rel_prominence: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSeries {
    pub peak_times_s: Vec<f64>,
    pub rr_intervals_ms: Vec<f64>,
}

impl BeatSeries {
    pub fn from_peak_times(peak_times_s: Vec<f64>) -> Result<Self> {
        if peak_times_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("beat times must be strictly increasing"));
        }
        let rr_intervals_ms = peak_times_s.windows(2).map(|w| (w[1] - w[0]) * 1000.0).collect();
        Ok(Self { peak_times_s, rr_intervals_ms })
    }

    /// Beats at `t0`, `t0 + rr[0]`, ...
    pub fn from_rr(t0: f64, rr_ms: &[f64]) -> Result<Self> {
        let mut times = vec![t0];
        for rr in rr_ms {
            times.push(times.last().unwrap() + rr / 1000.0);
        }
        Self::from_peak_times(times)
    }

    pub fn len(&self) -> usize {
        self.peak_times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peak_times_s.is_empty()
    }

    /// Beats whose peak time lies in `w`.
    pub fn restrict(&self, w: &Window) -> BeatSeries {
        let times: Vec<f64> = self.peak_times_s.iter().copied().filter(|&t| w.contains(t)).collect();
        let rr = times.windows(2).map(|p| (p[1] - p[0]) * 1000.0).collect();
        BeatSeries { peak_times_s: times, rr_intervals_ms: rr }
    }

    /// Writes `peak_time_s,rr_ms` rows; the first beat has no interval.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "peak_time_s,rr_ms")?;
        for (i, t) in self.peak_times_s.iter().enumerate() {
            match i.checked_sub(1).map(|j| self.rr_intervals_ms[j]) {
                Some(rr) => writeln!(out, "{t:.6},{rr:.6}")?,
                None => writeln!(out, "{t:.6},")?,
            }
        }
        Ok(())
    }
}

fn percentile_range(x: &[f64], lo: f64, hi: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let at = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
    at(hi) - at(lo)
}

pub fn detect_beats(x: &TimeSeries) -> Result<BeatSeries> {
    detect_beats_with(x, &BeatConfig::default())
}

pub fn detect_beats_with(x: &TimeSeries, cfg: &BeatConfig) -> Result<BeatSeries> {
    let v = x.samples();
    let n = v.len();
    if n < 3 {
        return Err(Error::TooFewPeaks { found: 0 });
    }
    let dx = gaussian_smooth_derivative(x, cfg.sigma_s)?;
    let dx = dx.samples();
    let radius = (cfg.sigma_s * x.rate_hz()).round() as usize + 1;
    let min_prom = cfg.min_rel_prominence * percentile_range(v, 0.05, 0.95);

    let mut peaks: Vec<usize> = Vec::new();
    for i in 0..n - 1 {
        if dx[i] > 0.0 && dx[i + 1] <= 0.0 {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(n);
            let j = (lo..hi).fold(lo, |best, k| if v[k] > v[best] { k } else { best });
            if j == 0 || j == n - 1 || peaks.last() == Some(&j) {
                continue;
            }
            if min_prom > 0.0 && prominence(v, j) >= min_prom {
                peaks.push(j);
            }
        }
    }
    peaks.dedup();

    // Physiologically impossible gaps: the smaller of two close peaks goes.
    let min_gap = cfg.min_rr_ms / 1000.0 * x.rate_hz();
    let mut kept: Vec<usize> = Vec::with_capacity(peaks.len());
    for p in peaks {
        match kept.last() {
            Some(&q) if ((p - q) as f64) < min_gap => {
                if v[p] > v[q] {
                    *kept.last_mut().unwrap() = p;
                }
            }
            _ => kept.push(p),
        }
    }
    if kept.len() < 2 {
        return Err(Error::TooFewPeaks { found: kept.len() });
    }
    let times = kept
        .iter()
        .map(|&j| {
            let (a, b, c) = (v[j - 1], v[j], v[j + 1]);
            let denom = a - 2.0 * b + c;
            let offset = if denom < 0.0 { (0.5 * (a - c) / denom).clamp(-0.5, 0.5) } else { 0.0 };
            x.time_of(j) + offset / x.rate_hz()
        })
        .collect();
    BeatSeries::from_peak_times(times)
}

/// Beats per minute: beats with peak time in `w`, scaled by 60 / duration.
pub fn heart_rate(b: &BeatSeries, w: &Window) -> Result<f64> {
    let (first, last) = match (b.peak_times_s.first(), b.peak_times_s.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::EmptyWindow { start_s: w.start_s, end_s: w.end_s }),
    };
    if w.end_s <= first || w.start_s > last {
        return Err(Error::EmptyWindow { start_s: w.start_s, end_s: w.end_s });
    }
    let count = b.peak_times_s.iter().filter(|&&t| w.contains(t)).count();
    Ok(count as f64 * 60.0 / w.duration_s())
}
