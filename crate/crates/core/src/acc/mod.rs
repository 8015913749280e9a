//! Wrist accelerometry: drift removal, rotation normalisation, gesture
//! classification (feature-weighted naive Bayes) and posture recovery by
//! sparse deconvolution plus a support vector machine.

pub mod deconv;
pub mod features;
pub mod fwnb;
pub mod posture;
pub mod rotation;
pub mod svm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{butterworth_lowpass, TimeSeries};

pub use deconv::{sparse_deconvolve, DeconvResult};
pub use features::{extract_gesture_features, GESTURE_FEATURES};
pub use fwnb::{classify_gesture, train_fwnb, FwnbModel};
pub use posture::{classify_posture, GestureTemplate, Posture, PostureConfig, PostureModel, PostureSample};
pub use rotation::{rotation_normalize, Normalized};
pub use svm::{smo_train, svm_predict, BinarySvm, Kernel, SvmModel, SvrModel};

pub const GESTURE_COUNT: usize = 8;
pub const DRIFT_CUTOFF_HZ: f64 = 0.4;
pub const DRIFT_ORDER: usize = 4;

/// Three equally long, equally sampled acceleration axes (g).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccStream {
    pub x: TimeSeries,
    pub y: TimeSeries,
    pub z: TimeSeries,
}

impl AccStream {
    pub fn new(x: TimeSeries, y: TimeSeries, z: TimeSeries) -> Result<Self> {
        if x.len() != y.len() || x.len() != z.len() {
            return Err(Error::invalid("accelerometer axes differ in length"));
        }
        if x.rate_hz() != y.rate_hz() || x.rate_hz() != z.rate_hz() {
            return Err(Error::invalid("accelerometer axes differ in sampling rate"));
        }
        Ok(Self { x, y, z })
    }

    pub fn from_samples(samples: &[[f64; 3]], rate_hz: f64, t0: f64) -> Result<Self> {
        let axis = |k: usize| TimeSeries::new(samples.iter().map(|s| s[k]).collect(), rate_hz, t0);
        Self::new(axis(0)?, axis(1)?, axis(2)?)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn rate_hz(&self) -> f64 {
        self.x.rate_hz()
    }

    pub fn t0(&self) -> f64 {
        self.x.t0()
    }

    pub fn axes(&self) -> [&[f64]; 3] {
        [self.x.samples(), self.y.samples(), self.z.samples()]
    }

    pub fn sample(&self, i: usize) -> [f64; 3] {
        [self.x.samples()[i], self.y.samples()[i], self.z.samples()[i]]
    }

    pub fn samples(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| self.sample(i)).collect()
    }

    /// Samples `range`, keeping the time base.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let t0 = self.x.time_of(range.start);
        let cut = |s: &TimeSeries| TimeSeries::new(s.samples()[range.clone()].to_vec(), s.rate_hz(), t0);
        Self::new(cut(&self.x)?, cut(&self.y)?, cut(&self.z)?)
    }

    /// Every sample mapped through `m` (row-major 3x3).
    pub fn transformed(&self, m: &[[f64; 3]; 3]) -> Result<Self> {
        let rotated: Vec<[f64; 3]> = self
            .samples()
            .iter()
            .map(|v| std::array::from_fn(|r| (0..3).map(|c| m[r][c] * v[c]).sum()))
            .collect();
        Self::from_samples(&rotated, self.rate_hz(), self.t0())
    }
}

/// Start indices of sliding windows of `len` samples advancing by `step`.
pub fn window_starts(n: usize, len: usize, step: usize) -> Vec<usize> {
    if len == 0 || step == 0 || n < len {
        return Vec::new();
    }
    (0..=n - len).step_by(step).collect()
}

/// Removes drift: each axis minus its 0.4 Hz low-pass.
pub fn preprocess_acc(a: &AccStream) -> Result<AccStream> {
    if a.rate_hz() < 16.0 {
        return Err(Error::invalid(format!("accelerometer rate {} Hz is below 16 Hz", a.rate_hz())));
    }
    let detrend = |s: &TimeSeries| -> Result<TimeSeries> {
        let drift = butterworth_lowpass(s, DRIFT_CUTOFF_HZ, DRIFT_ORDER)?;
        s.with_samples(s.samples().iter().zip(drift.samples()).map(|(v, d)| v - d).collect())
    };
    AccStream::new(detrend(&a.x)?, detrend(&a.y)?, detrend(&a.z)?)
}
