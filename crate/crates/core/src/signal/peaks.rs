//! Level crossings and prominence-gated peak picking.

use super::TimeSeries;

/// Indices where the signal crosses `level`.
///
/// A crossing between samples `i` and `i + 1` is reported as `i`. When the
/// signal sits exactly on `level` for one or more samples and comes out on
/// the other side, the crossing is reported once, at the first on-level
/// sample. Touching the level without changing side is not a crossing.
pub fn zero_crossings(x: &TimeSeries, level: f64) -> Vec<usize> {
    crossings(x.samples(), level)
}

pub(crate) fn crossings(x: &[f64], level: f64) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last_sign = 0i8;
    let mut zero_run_start: Option<usize> = None;
    for (i, &v) in x.iter().enumerate() {
        let d = v - level;
        let s = if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        };
        if s == 0 {
            zero_run_start.get_or_insert(i);
            continue;
        }
        if last_sign != 0 && s != last_sign {
            out.push(zero_run_start.unwrap_or(i - 1));
        }
        zero_run_start = None;
        last_sign = s;
    }
    out
}

/// Local maxima whose prominence is at least `min_prominence`, thinned so
/// that no two survivors are closer than `min_separation_s`. Within a
/// conflict the taller peak wins, then the earlier one.
pub fn find_peaks(x: &TimeSeries, min_prominence: f64, min_separation_s: f64) -> Vec<usize> {
    let min_sep = min_separation_s * x.rate_hz();
    select_peaks(x.samples(), min_prominence, min_sep)
}

pub(crate) fn select_peaks(x: &[f64], min_prominence: f64, min_sep_samples: f64) -> Vec<usize> {
    let candidates: Vec<usize> = local_maxima(x)
        .into_iter()
        .filter(|&p| prominence(x, p) >= min_prominence)
        .collect();
    if min_sep_samples <= 0.0 {
        return candidates;
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| x[candidates[b]].total_cmp(&x[candidates[a]]).then(a.cmp(&b)));
    let mut keep = vec![true; candidates.len()];
    for &k in &order {
        if !keep[k] {
            continue;
        }
        let p = candidates[k];
        for (j, &q) in candidates.iter().enumerate() {
            if j != k && keep[j] && (p.abs_diff(q) as f64) < min_sep_samples {
                keep[j] = false;
            }
        }
    }
    candidates.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
}

/// Interior local maxima; flat tops report their middle sample.
pub(crate) fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                out.push((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        i += 1;
    }
    out
}

/// Height of a peak above the higher of the two lowest points reached before
/// climbing to something taller (or hitting an edge).
pub(crate) fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}
