//! Feature-weighted naive Bayes.
//!
//! Each class keeps a per-feature mean and standard deviation. A sample is
//! scored against a class by the weighted sum of its per-feature Gaussian
//! proximities `exp(-z^2 / 2)`, each in (0, 1]; weights grow with how well a
//! feature separates the classes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::{extract_gesture_features, GESTURE_FEATURES};
use super::rotation::rotation_normalize;
use super::AccStream;
use crate::error::{Error, Result};

pub const MIN_SAMPLES_PER_CLASS: usize = 3;
const WEIGHT_FLOOR: f64 = 1e-3;
const STD_FLOOR_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub label: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwnbModel {
    /// Sorted by label.
    pub classes: Vec<ClassStats>,
    pub feature_weights: Vec<f64>,
}

/// Between-class share of the total variance of each feature, clamped into
/// the open unit interval. A feature with no variance at all weighs 0.5.
pub fn feature_weights(samples: &[Vec<f64>], labels: &[usize]) -> Vec<f64> {
    let dim = samples[0].len();
    let n = samples.len() as f64;
    let mut groups: BTreeMap<usize, Vec<&Vec<f64>>> = BTreeMap::new();
    for (s, &l) in samples.iter().zip(labels) {
        groups.entry(l).or_default().push(s);
    }
    (0..dim)
        .map(|f| {
            let grand = samples.iter().map(|s| s[f]).sum::<f64>() / n;
            let mut between = 0.0;
            let mut within = 0.0;
            for members in groups.values() {
                let m = members.iter().map(|s| s[f]).sum::<f64>() / members.len() as f64;
                between += members.len() as f64 * (m - grand).powi(2);
                within += members.iter().map(|s| (s[f] - m).powi(2)).sum::<f64>();
            }
            let (between, within) = (between / n, within / n);
            if between + within <= 0.0 {
                0.5
            } else {
                (between / (between + within)).clamp(WEIGHT_FLOOR, 1.0 - WEIGHT_FLOOR)
            }
        })
        .collect()
}

impl FwnbModel {
    pub fn train(samples: &[Vec<f64>], labels: &[usize]) -> Result<Self> {
        if samples.len() != labels.len() || samples.is_empty() {
            return Err(Error::invalid("need one label per training sample"));
        }
        let dim = samples[0].len();
        if samples.iter().any(|s| s.len() != dim || s.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("training features must be finite and equally long"));
        }
        let mut groups: BTreeMap<usize, Vec<&Vec<f64>>> = BTreeMap::new();
        for (s, &l) in samples.iter().zip(labels) {
            groups.entry(l).or_default().push(s);
        }
        if groups.len() < 2 {
            return Err(Error::invalid("FWNB needs at least two classes"));
        }
        if let Some((label, members)) = groups.iter().find(|(_, m)| m.len() < MIN_SAMPLES_PER_CLASS) {
            return Err(Error::invalid(format!(
                "class {label} has {} samples, need at least {MIN_SAMPLES_PER_CLASS}",
                members.len()
            )));
        }
        let floors: Vec<f64> = (0..dim)
            .map(|f| {
                let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s[f]), b.max(s[f])));
                (STD_FLOOR_FRACTION * (hi - lo)).max(1e-12)
            })
            .collect();
        let classes = groups
            .iter()
            .map(|(&label, members)| {
                let k = members.len() as f64;
                let mean: Vec<f64> = (0..dim).map(|f| members.iter().map(|s| s[f]).sum::<f64>() / k).collect();
                let std = (0..dim)
                    .map(|f| {
                        let var = members.iter().map(|s| (s[f] - mean[f]).powi(2)).sum::<f64>() / k;
                        var.sqrt().max(floors[f])
                    })
                    .collect();
                ClassStats { label, mean, std }
            })
            .collect();
        Ok(Self { classes, feature_weights: feature_weights(samples, labels) })
    }

    /// Score of every class, in label order.
    pub fn scores(&self, x: &[f64]) -> Vec<(usize, f64)> {
        self.classes
            .iter()
            .map(|c| {
                let s = (0..x.len())
                    .map(|f| {
                        let z = (x[f] - c.mean[f]) / c.std[f];
                        self.feature_weights[f] * (-0.5 * z * z).exp()
                    })
                    .sum();
                (c.label, s)
            })
            .collect()
    }

    /// Highest-scoring label; ties go to the smallest label.
    pub fn predict(&self, x: &[f64]) -> (usize, f64) {
        self.scores(x)
            .into_iter()
            .fold((usize::MAX, f64::NEG_INFINITY), |best, (l, s)| if s > best.1 { (l, s) } else { best })
    }
}

/// Features of a rotation-normalised segment, as used by the gesture model.
pub fn gesture_feature_vector(segment: &AccStream) -> Result<Vec<f64>> {
    let norm = rotation_normalize(segment)?;
    Ok(extract_gesture_features(&norm.segment).to_vec())
}

pub fn train_fwnb(segments: &[(AccStream, usize)]) -> Result<FwnbModel> {
    let mut xs = Vec::with_capacity(segments.len());
    let mut ys = Vec::with_capacity(segments.len());
    for (seg, label) in segments {
        xs.push(gesture_feature_vector(seg)?);
        ys.push(*label);
    }
    FwnbModel::train(&xs, &ys)
}

pub fn classify_gesture(model: &FwnbModel, segment: &AccStream) -> Result<(usize, f64)> {
    let f = gesture_feature_vector(segment)?;
    debug_assert_eq!(f.len(), GESTURE_FEATURES);
    Ok(model.predict(&f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_classes() {
        let xs = vec![vec![1.0, 2.0]; 6];
        let ys = vec![3, 3, 3, 1, 1, 1];
        let m = FwnbModel::train(&xs, &ys).unwrap();
        assert_eq!(m.feature_weights, vec![0.5, 0.5]);
        assert_eq!(m.predict(&[1.0, 2.0]).0, 1);
    }

    #[test]
    fn separating_feature_weighs_most() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..60 {
            let class = i % 2;
            let sep = class as f64 * 10.0 + rng.random_range(0.0..1.0);
            xs.push(vec![rng.random_range(0.0..1.0), sep, rng.random_range(0.0..1.0)]);
            ys.push(class);
        }
        let w = FwnbModel::train(&xs, &ys).unwrap().feature_weights;
        assert!(w[1] > w[0] && w[1] > w[2]);
        assert!(w.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn too_few_samples() {
        let xs = vec![vec![0.0], vec![1.0], vec![2.0], vec![5.0], vec![6.0]];
        assert!(FwnbModel::train(&xs, &[0, 0, 0, 1, 1]).is_err());
        assert!(FwnbModel::train(&xs, &[0; 5]).is_err());
    }

    #[test]
    fn separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let centers: Vec<Vec<f64>> =
            (0..8).map(|c| (0..12).map(|f| if f == c || f == c + 4 { 6.0 } else { 0.0 }).collect()).collect();
        let draw = |c: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            centers[c].iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for c in 0..8 {
            for _ in 0..50 {
                xs.push(draw(c, &mut rng));
                ys.push(c);
            }
        }
        let model = FwnbModel::train(&xs, &ys).unwrap();
        let mut correct = 0;
        for c in 0..8 {
            for _ in 0..25 {
                correct += (model.predict(&draw(c, &mut rng)).0 == c) as usize;
            }
        }
        assert!(correct as f64 / 200.0 >= 0.95, "accuracy {}", correct as f64 / 200.0);
    }
}
