//! Time-domain heart-rate-variability features.

use serde::{Deserialize, Serialize};

use super::beats::{BeatConfig, BeatSeries};
use crate::error::{Error, Result};
use crate::signal::Window;

pub const HISTOGRAM_BIN_MS: f64 = 7.8125;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrvFeatures {
    pub rr_mean_ms: f64,
    pub sdnn_ms: f64,
    pub sdsd_ms: f64,
    pub rmssd_ms: f64,
    pub nn50: usize,
    pub pnn50: f64,
    pub hrv_ti: f64,
    pub tinn_ms: f64,
}

impl HrvFeatures {
    pub const NAMES: [&'static str; 8] =
        ["rr_mean_ms", "sdnn_ms", "sdsd_ms", "rmssd_ms", "nn50", "pnn50", "hrv_ti", "tinn_ms"];

    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.rr_mean_ms,
            self.sdnn_ms,
            self.sdsd_ms,
            self.rmssd_ms,
            self.nn50 as f64,
            self.pnn50,
            self.hrv_ti,
            self.tinn_ms,
        ]
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Counts per histogram bin `[k w, (k + 1) w)`, starting at the bin of the
/// smallest interval. Returns the first bin index and the counts.
pub fn rr_histogram(rr: &[f64]) -> (i64, Vec<usize>) {
    let bin = |v: f64| (v / HISTOGRAM_BIN_MS).floor() as i64;
    let lo = rr.iter().map(|&v| bin(v)).min().unwrap_or(0);
    let hi = rr.iter().map(|&v| bin(v)).max().unwrap_or(0);
    let mut counts = vec![0usize; (hi - lo + 1) as usize];
    for &v in rr {
        counts[(bin(v) - lo) as usize] += 1;
    }
    (lo, counts)
}

/// Base width of the triangle that best fits the histogram in the least
/// squares sense. The apex sits on the modal bin centre; the feet range
/// over bin edges on either side.
pub fn tinn(rr: &[f64]) -> f64 {
    let (_, counts) = rr_histogram(rr);
    let w = HISTOGRAM_BIN_MS;
    let nb = counts.len();
    let mode = (0..nb).fold(0, |best, k| if counts[k] > counts[best] { k } else { best });
    let apex_t = (mode as f64 + 0.5) * w;
    let apex_h = counts[mode] as f64;
    let mut best = (f64::INFINITY, w);
    for left in 0..=mode {
        for right in mode + 1..=nb {
            let (nl, mr) = (left as f64 * w, right as f64 * w);
            let err: f64 = (0..nb)
                .map(|k| {
                    let c = (k as f64 + 0.5) * w;
                    let q = if c <= nl || c >= mr {
                        0.0
                    } else if c <= apex_t {
                        apex_h * (c - nl) / (apex_t - nl)
                    } else {
                        apex_h * (mr - c) / (mr - apex_t)
                    };
                    (counts[k] as f64 - q).powi(2)
                })
                .sum();
            if err < best.0 {
                best = (err, mr - nl);
            }
        }
    }
    best.1
}

/// Features of an RR list taken as is (no gating).
pub fn hrv_from_rr(rr: &[f64]) -> Result<HrvFeatures> {
    if rr.len() < 2 {
        return Err(Error::Degenerate(format!("HRV needs at least 2 RR intervals, got {}", rr.len())));
    }
    let diffs: Vec<f64> = rr.windows(2).map(|w| w[1] - w[0]).collect();
    let nn50 = diffs.iter().filter(|d| d.abs() > 50.0).count();
    let (_, counts) = rr_histogram(rr);
    let modal = *counts.iter().max().unwrap() as f64;
    Ok(HrvFeatures {
        rr_mean_ms: mean(rr),
        sdnn_ms: sample_std(rr),
        sdsd_ms: sample_std(&diffs),
        rmssd_ms: (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt(),
        nn50,
        pnn50: nn50 as f64 / diffs.len() as f64,
        hrv_ti: rr.len() as f64 / modal,
        tinn_ms: tinn(rr),
    })
}

/// Features over the beats in `w`; intervals outside the physiological
/// range are excluded.
pub fn hrv_features(b: &BeatSeries, w: &Window) -> Result<HrvFeatures> {
    hrv_features_with(b, w, &BeatConfig::default())
}

pub fn hrv_features_with(b: &BeatSeries, w: &Window, cfg: &BeatConfig) -> Result<HrvFeatures> {
    let inside = b.restrict(w);
    if inside.len() < 3 {
        return Err(Error::TooFewPeaks { found: inside.len() });
    }
    let tol = 1e-6;
    let rr: Vec<f64> = inside
        .rr_intervals_ms
        .iter()
        .copied()
        .filter(|&r| r >= cfg.min_rr_ms - tol && r <= cfg.max_rr_ms + tol)
        .collect();
    hrv_from_rr(&rr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rr() {
        let f = hrv_from_rr(&[800.0; 20]).unwrap();
        assert_eq!(f.rr_mean_ms, 800.0);
        assert_eq!((f.sdnn_ms, f.sdsd_ms, f.rmssd_ms, f.nn50, f.pnn50), (0.0, 0.0, 0.0, 0, 0.0));
        assert_eq!(f.hrv_ti, 1.0);
        assert_eq!(f.tinn_ms, HISTOGRAM_BIN_MS);
    }

    #[test]
    fn nn50_is_strict() {
        let f = hrv_from_rr(&[800.0, 850.0, 800.0]).unwrap();
        assert!((f.rr_mean_ms - 816.6666666666666).abs() < 1e-9);
        assert_eq!(f.nn50, 0);
        let f = hrv_from_rr(&[800.0, 860.0, 800.0]).unwrap();
        assert_eq!(f.nn50, 2);
        assert_eq!(f.pnn50, 1.0);
    }

    #[test]
    fn histogram_bins() {
        let (lo, counts) = rr_histogram(&[0.0, 7.8, 7.8125, 20.0]);
        assert_eq!(lo, 0);
        assert_eq!(counts, vec![2, 1, 1]);
    }

    #[test]
    fn window_gating() {
        let b = BeatSeries::from_rr(0.0, &[800.0, 2500.0, 800.0, 810.0]).unwrap();
        let f = hrv_features(&b, &Window::new(0.0, 100.0).unwrap()).unwrap();
        assert!((f.rr_mean_ms - 2410.0 / 3.0).abs() < 1e-9);
        assert!(hrv_features(&b, &Window::new(0.0, 1.0).unwrap()).is_err());
    }
}
