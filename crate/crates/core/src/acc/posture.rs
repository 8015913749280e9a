//! Posture recovery.
//!
//! A window of wrist acceleration is modelled per axis as the gesture's
//! reference vector convolved with a posture-dependent, approximately sparse
//! factor (ASF). The ASF is recovered by l1 deconvolution and its 12
//! statistical features are classified by a one-vs-one SVM.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::deconv::{correlate, sparse_deconvolve};
use super::features::{axis_features, GESTURE_FEATURES};
use super::fwnb::{classify_gesture, FwnbModel};
use super::svm::{smo_train, Kernel, SvmModel};
use super::AccStream;
use crate::error::{Error, Result};

/// Peak absolute acceleration (g) at or below which a window has no motion.
pub const STILL_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Posture {
    /// Normal walking in the six-class set.
    Walking,
    Sitting,
    Standing,
    Lying,
    WalkingWithWalker,
    WalkingWithStick,
}

impl Posture {
    pub const BASE: [Posture; 4] = [Posture::Walking, Posture::Sitting, Posture::Standing, Posture::Lying];
    pub const EXTENDED: [Posture; 6] = [
        Posture::Walking,
        Posture::Sitting,
        Posture::Standing,
        Posture::Lying,
        Posture::WalkingWithWalker,
        Posture::WalkingWithStick,
    ];

    /// 1-based id.
    pub fn id(self) -> usize {
        Self::EXTENDED.iter().position(|&p| p == self).unwrap() + 1
    }

    pub fn from_id(id: usize) -> Option<Self> {
        id.checked_sub(1).and_then(|k| Self::EXTENDED.get(k).copied())
    }

    pub fn is_static(self) -> bool {
        matches!(self, Posture::Sitting | Posture::Standing | Posture::Lying)
    }

    pub fn name(self) -> &'static str {
        match self {
            Posture::Walking => "walking",
            Posture::Sitting => "sitting",
            Posture::Standing => "standing",
            Posture::Lying => "lying",
            Posture::WalkingWithWalker => "walking_with_walker",
            Posture::WalkingWithStick => "walking_with_stick",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::EXTENDED.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equalizer {
    pub axis: usize,
    pub posture: Posture,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureTemplate {
    pub gesture_id: usize,
    /// One kernel per axis.
    pub reference_vector: [Vec<f64>; 3],
    pub equalizers: Vec<Equalizer>,
}

impl GestureTemplate {
    /// Sample-wise mean of aligned isolated examples, truncated to the
    /// shortest one.
    pub fn from_examples(gesture_id: usize, examples: &[AccStream]) -> Result<Self> {
        let len = examples.iter().map(AccStream::len).min().unwrap_or(0);
        if len == 0 {
            return Err(Error::invalid(format!("gesture {gesture_id} has no template examples")));
        }
        let k = examples.len() as f64;
        let reference_vector: [Vec<f64>; 3] = std::array::from_fn(|a| {
            (0..len).map(|i| examples.iter().map(|e| e.axes()[a][i]).sum::<f64>() / k).collect()
        });
        Self::new(gesture_id, reference_vector)
    }

    pub fn new(gesture_id: usize, reference_vector: [Vec<f64>; 3]) -> Result<Self> {
        if reference_vector.iter().all(|h| h.iter().all(|&v| v == 0.0)) {
            return Err(Error::invalid(format!("gesture {gesture_id} has a zero reference vector")));
        }
        Ok(Self { gesture_id, reference_vector, equalizers: Vec::new() })
    }

    pub fn lambda(&self, axis: usize, posture: Posture) -> Option<f64> {
        self.equalizers.iter().find(|e| e.axis == axis && e.posture == posture).map(|e| e.lambda)
    }

    /// Per-axis ASF of `segment` under the equalizers of `posture`. An axis
    /// whose kernel is identically zero yields a zero factor.
    pub fn asf(&self, segment: &AccStream, posture: Posture) -> Result<[Vec<f64>; 3]> {
        let axes = segment.axes();
        let mut out: [Vec<f64>; 3] = Default::default();
        for a in 0..3 {
            let h = &self.reference_vector[a];
            if h.iter().all(|&v| v == 0.0) {
                out[a] = vec![0.0; segment.len()];
                continue;
            }
            let lambda = self
                .lambda(a, posture)
                .ok_or_else(|| Error::invalid(format!("gesture {} has no equalizer for {}", self.gesture_id, posture.name())))?;
            out[a] = sparse_deconvolve(axes[a], h, lambda)?.asf;
        }
        Ok(out)
    }

    pub fn asf_features(&self, segment: &AccStream, posture: Posture) -> Result<[f64; GESTURE_FEATURES]> {
        let asf = self.asf(segment, posture)?;
        Ok(axis_features([&asf[0], &asf[1], &asf[2]]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostureSample {
    pub window: AccStream,
    pub gesture: usize,
    pub posture: Posture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostureConfig {
    pub c: f64,
    /// RBF width; `None` means one over the feature count.
    pub gamma: Option<f64>,
    /// Candidate multipliers of each equaliser's data scale.
    pub lambda_grid: Vec<f64>,
}

impl Default for PostureConfig {
    fn default() -> Self {
        Self { c: 10.0, gamma: None, lambda_grid: vec![0.005, 0.01, 0.02, 0.04, 0.08] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostureModel {
    /// Classes the model was trained on.
    pub postures: Vec<Posture>,
    pub templates: Vec<GestureTemplate>,
    pub svm: SvmModel,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// Training windows per posture.
    pub counts: BTreeMap<Posture, usize>,
    pub lambda_multiplier: f64,
    pub training_error: f64,
}

fn still(segment: &AccStream) -> bool {
    segment.axes().iter().all(|a| a.iter().all(|v| v.abs() <= STILL_THRESHOLD))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Smallest lambda at which the deconvolution of `y` by `h` is all zero.
fn lambda_max(y: &[f64], h: &[f64]) -> f64 {
    correlate(h, y).iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Typical `lambda_max` per (gesture index, axis, posture), falling back to
/// the gesture's pooled value and then to the global one.
fn equaliser_scales(templates: &[GestureTemplate], samples: &[PostureSample], postures: &[Posture]) -> Vec<[Vec<f64>; 3]> {
    let index: BTreeMap<usize, usize> = templates.iter().enumerate().map(|(k, t)| (t.gesture_id, k)).collect();
    let mut by_key: BTreeMap<(usize, usize, Posture), Vec<f64>> = BTreeMap::new();
    for s in samples {
        let g = index[&s.gesture];
        for a in 0..3 {
            by_key.entry((g, a, s.posture)).or_default().push(lambda_max(s.window.axes()[a], &templates[g].reference_vector[a]));
        }
    }
    let global = median(by_key.values().flatten().copied().collect()).unwrap_or(1.0).max(1e-12);
    (0..templates.len())
        .map(|g| {
            std::array::from_fn(|a| {
                let pooled = median(
                    by_key.iter().filter(|(k, _)| k.0 == g && k.1 == a).flat_map(|(_, v)| v.iter().copied()).collect(),
                )
                .unwrap_or(global);
                postures
                    .iter()
                    .map(|&p| {
                        let v = by_key.get(&(g, a, p)).and_then(|v| median(v.clone())).unwrap_or(pooled);
                        if v > 0.0 { v } else { global }
                    })
                    .collect()
            })
        })
        .collect()
}

fn standardise(x: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect()
}

impl PostureModel {
    /// Learns equalisers by grid search over a shared multiplier, keeping the
    /// one with the fewest training misclassifications under the
    /// prediction-time procedure (true gestures assumed).
    pub fn train(
        mut templates: Vec<GestureTemplate>,
        samples: &[PostureSample],
        postures: &[Posture],
        cfg: &PostureConfig,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("no posture training windows"));
        }
        if cfg.lambda_grid.is_empty() || cfg.lambda_grid.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::invalid("equaliser grid must be non-empty and positive"));
        }
        for s in samples {
            if !templates.iter().any(|t| t.gesture_id == s.gesture) {
                return Err(Error::invalid(format!("no template for gesture {}", s.gesture)));
            }
            if !postures.contains(&s.posture) {
                return Err(Error::invalid(format!("posture {} not in the class set", s.posture.name())));
            }
        }
        let scales = equaliser_scales(&templates, samples, postures);
        let mut counts = BTreeMap::new();
        for s in samples {
            *counts.entry(s.posture).or_insert(0) += 1;
        }
        let gamma = cfg.gamma.unwrap_or(1.0 / GESTURE_FEATURES as f64);

        let mut best: Option<PostureModel> = None;
        for &mult in &cfg.lambda_grid {
            for (t, sc) in templates.iter_mut().zip(&scales) {
                t.equalizers = (0..3)
                    .flat_map(|a| postures.iter().enumerate().map(move |(k, &p)| (a, k, p)))
                    .map(|(a, k, p)| Equalizer { axis: a, posture: p, lambda: mult * sc[a][k] })
                    .collect();
            }
            let template = |g: usize| templates.iter().find(|t| t.gesture_id == g).unwrap();
            let raw: Vec<[f64; GESTURE_FEATURES]> = samples
                .iter()
                .map(|s| template(s.gesture).asf_features(&s.window, s.posture))
                .collect::<Result<_>>()?;
            let n = raw.len() as f64;
            let mean: Vec<f64> = (0..GESTURE_FEATURES).map(|f| raw.iter().map(|r| r[f]).sum::<f64>() / n).collect();
            let scale: Vec<f64> = (0..GESTURE_FEATURES)
                .map(|f| {
                    let sd = (raw.iter().map(|r| (r[f] - mean[f]).powi(2)).sum::<f64>() / n).sqrt();
                    if sd > 1e-12 { sd } else { 1.0 }
                })
                .collect();
            let xs: Vec<Vec<f64>> = raw.iter().map(|r| standardise(r, &mean, &scale)).collect();
            let labels: Vec<usize> = samples.iter().map(|s| s.posture.id()).collect();
            let svm = smo_train(&xs, &labels, cfg.c, Kernel::Rbf { gamma })?;
            let mut model = PostureModel {
                postures: postures.to_vec(),
                templates: templates.clone(),
                svm,
                feature_mean: mean,
                feature_scale: scale,
                counts: counts.clone(),
                lambda_multiplier: mult,
                training_error: 0.0,
            };
            let mut wrong = 0usize;
            for s in samples {
                wrong += (model.classify_with_gesture(&s.window, s.gesture)? != s.posture) as usize;
            }
            model.training_error = wrong as f64 / n;
            log::debug!("equaliser multiplier {mult}: training error {:.3}", model.training_error);
            if best.as_ref().is_none_or(|b| model.training_error < b.training_error) {
                best = Some(model);
            }
        }
        Ok(best.unwrap())
    }

    pub fn template(&self, gesture: usize) -> Result<&GestureTemplate> {
        self.templates
            .iter()
            .find(|t| t.gesture_id == gesture)
            .ok_or_else(|| Error::invalid(format!("no template for gesture {gesture}")))
    }

    /// Static posture seen most often in training; ties go to the smallest id.
    pub fn static_prior(&self) -> Result<Posture> {
        self.postures
            .iter()
            .filter(|p| p.is_static())
            .max_by(|a, b| {
                let (ca, cb) = (self.counts.get(a).copied().unwrap_or(0), self.counts.get(b).copied().unwrap_or(0));
                ca.cmp(&cb).then(b.cmp(a))
            })
            .copied()
            .ok_or_else(|| Error::Degenerate("model has no static posture".into()))
    }

    /// Tries every candidate posture's equalisers, keeps the ASF whose SVM
    /// score for that candidate is largest and returns the SVM's label for it.
    pub fn classify_with_gesture(&self, segment: &AccStream, gesture: usize) -> Result<Posture> {
        if still(segment) {
            return self.static_prior();
        }
        let template = self.template(gesture)?;
        let mut best: Option<(f64, Vec<f64>)> = None;
        for &p in &self.postures {
            let x = standardise(&template.asf_features(segment, p)?, &self.feature_mean, &self.feature_scale);
            let score = self.svm.class_score(&x, p.id());
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, x));
            }
        }
        let (_, x) = best.ok_or_else(|| Error::Degenerate("model has no postures".into()))?;
        let id = self.svm.predict(&x);
        Posture::from_id(id).ok_or_else(|| Error::invalid(format!("SVM returned unknown posture id {id}")))
    }
}

/// Gesture first, then posture from that gesture's equalisers.
pub fn classify_posture(model: &PostureModel, fwnb: &FwnbModel, segment: &AccStream) -> Result<Posture> {
    if still(segment) {
        return model.static_prior();
    }
    let (gesture, _) = classify_gesture(fwnb, segment)?;
    model.classify_with_gesture(segment, gesture)
}
