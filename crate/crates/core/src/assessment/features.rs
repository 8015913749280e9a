//! Behavioural features of one activity window from the sensor activations
//! inside it.

use crate::activity::SensorEvent;
use crate::error::{Error, Result};

pub const PERFORMANCE_FEATURES: usize = 29;
pub const MAX_RUN: usize = 18;

pub fn performance_feature_names() -> Vec<String> {
    let mut names = vec!["occurrences".to_string(), "occurrences_per_min".to_string()];
    names.extend((1..=MAX_RUN).map(|l| format!("runs_ge_{l}")));
    names.extend((1..=9).map(|p| format!("gap_p{}", p * 10)));
    names
}

/// Nearest-rank percentile of sorted data.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// The 29 features: activation count, activations per minute, the number
/// of same-sensor runs of length at least `L` for `L = 1..=18`, and the
/// 10th..90th nearest-rank percentiles of the gaps between successive
/// distinct activation times.
pub fn extract_performance_features(events: &[SensorEvent], start_s: f64, end_s: f64) -> Result<[f64; PERFORMANCE_FEATURES]> {
    if !(end_s > start_s) {
        return Err(Error::EmptyWindow { start_s, end_s });
    }
    let mut on: Vec<&SensorEvent> = events.iter().filter(|e| e.state && e.timestamp_s >= start_s && e.timestamp_s < end_s).collect();
    on.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));

    let mut f = [0.0; PERFORMANCE_FEATURES];
    f[0] = on.len() as f64;
    f[1] = f[0] / ((end_s - start_s) / 60.0);

    let mut runs = Vec::new();
    let mut i = 0;
    while i < on.len() {
        let j = on[i..].iter().position(|e| e.sensor_id != on[i].sensor_id).map_or(on.len(), |d| i + d);
        runs.push(j - i);
        i = j;
    }
    for l in 1..=MAX_RUN {
        f[1 + l] = runs.iter().filter(|&&r| r >= l).count() as f64;
    }

    let mut times: Vec<f64> = on.iter().map(|e| e.timestamp_s).collect();
    times.dedup();
    let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(f64::total_cmp);
    for p in 1..=9 {
        f[1 + MAX_RUN + p] = nearest_rank(&gaps, 10.0 * p as f64);
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: f64, s: usize) -> SensorEvent {
        SensorEvent { timestamp_s: t, sensor_id: s, state: true }
    }

    #[test]
    fn empty_window_is_zero() {
        let f = extract_performance_features(&[], 0.0, 60.0).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
        assert!(extract_performance_features(&[], 5.0, 5.0).is_err());
    }

    #[test]
    fn names_match_length() {
        assert_eq!(performance_feature_names().len(), PERFORMANCE_FEATURES);
    }

    #[test]
    fn small_log() {
        let events = [ev(1.0, 4), ev(2.0, 4), ev(4.0, 5), ev(8.0, 4), SensorEvent { timestamp_s: 9.0, sensor_id: 6, state: false }];
        let f = extract_performance_features(&events, 0.0, 30.0).unwrap();
        assert_eq!(f[0], 4.0);
        assert_eq!(f[1], 8.0);
        assert_eq!(&f[2..5], &[3.0, 1.0, 0.0]);
        // gaps 1, 2, 4
        assert_eq!(f[20], 1.0);
        assert_eq!(f[24], 2.0);
        assert_eq!(f[28], 4.0);
    }

    #[test]
    fn percentile_ranks() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 10.0), 1.0);
        assert_eq!(nearest_rank(&v, 55.0), 6.0);
        assert_eq!(nearest_rank(&v, 90.0), 9.0);
    }
}
