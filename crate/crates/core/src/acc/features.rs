//! The 12 statistical features of a three-axis segment.

use super::AccStream;

pub const GESTURE_FEATURES: usize = 12;

pub const FEATURE_NAMES: [&str; GESTURE_FEATURES] = [
    "mean_x", "mean_y", "mean_z", "std_x", "std_y", "std_z", "rms_x", "rms_y", "rms_z", "corr_xy", "corr_yz",
    "corr_xz",
];

/// Per-axis mean, population standard deviation and RMS, then the
/// xy/yz/xz correlations (0 when either axis is constant).
pub fn extract_gesture_features(segment: &AccStream) -> [f64; GESTURE_FEATURES] {
    axis_features(segment.axes())
}

pub fn axis_features(axes: [&[f64]; 3]) -> [f64; GESTURE_FEATURES] {
    let n = axes[0].len() as f64;
    let mean = axes.map(|a| a.iter().sum::<f64>() / n);
    let var: [f64; 3] = std::array::from_fn(|k| axes[k].iter().map(|v| (v - mean[k]).powi(2)).sum::<f64>() / n);
    let std = var.map(f64::sqrt);
    let rms = axes.map(|a| (a.iter().map(|v| v * v).sum::<f64>() / n).sqrt());
    let corr = |a: usize, b: usize| {
        if std[a] == 0.0 || std[b] == 0.0 {
            return 0.0;
        }
        let cov = axes[a].iter().zip(axes[b]).map(|(x, y)| (x - mean[a]) * (y - mean[b])).sum::<f64>() / n;
        (cov / (std[a] * std[b])).clamp(-1.0, 1.0)
    };
    [
        mean[0], mean[1], mean[2], std[0], std[1], std[2], rms[0], rms[1], rms[2],
        corr(0, 1), corr(1, 2), corr(0, 2),
    ]
}
