//! Skin-conductance-response features over a response window.

use serde::{Deserialize, Serialize};

use super::EdaDecomposition;
use crate::error::{Error, Result};
use crate::signal::peaks::select_peaks;
use crate::signal::Window;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaFeatures {
    pub n_scr: usize,
    /// Seconds from window start to the onset of the first SCR; `None` when
    /// the window holds no SCR.
    pub latency_s: Option<f64>,
    pub amp_sum_us: f64,
    pub scr_mean: f64,
    pub iscr: f64,
    pub phasic_max: f64,
    pub tonic_mean: f64,
}

impl EdaFeatures {
    /// Flat vector with a missing latency mapped to the window duration.
    pub fn to_vec(&self, window_s: f64) -> Vec<f64> {
        vec![
            self.n_scr as f64,
            self.latency_s.unwrap_or(window_s),
            self.amp_sum_us,
            self.scr_mean,
            self.iscr,
            self.phasic_max,
            self.tonic_mean,
        ]
    }

    pub const NAMES: [&'static str; 7] =
        ["n_scr", "latency_s", "amp_sum_us", "scr_mean", "iscr", "phasic_max", "tonic_mean"];
}

/// An SCR: onset (foot) index and peak index, relative to the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scr {
    pub onset: usize,
    pub peak: usize,
    pub amplitude: f64,
}

pub fn detect_scrs(phasic: &[f64], threshold_us: f64) -> Vec<Scr> {
    select_peaks(phasic, threshold_us, 0.0)
        .into_iter()
        .map(|peak| {
            let mut onset = peak;
            while onset > 0 && phasic[onset - 1] < phasic[onset] {
                onset -= 1;
            }
            let foot = phasic[onset].max(0.0);
            Scr { onset, peak, amplitude: (phasic[peak] - foot).max(0.0) }
        })
        .collect()
}

pub fn extract_eda_features(dec: &EdaDecomposition, w: &Window, scr_threshold_us: f64) -> Result<EdaFeatures> {
    if !(scr_threshold_us > 0.0) {
        return Err(Error::invalid("SCR threshold must be positive"));
    }
    let range = dec.phasic.index_range(w)?;
    let phasic = &dec.phasic.samples()[range.clone()];
    let tonic = &dec.tonic.samples()[range.clone()];
    let dt = dec.phasic.dt();

    let scrs = detect_scrs(phasic, scr_threshold_us);
    let amp_sum: f64 = scrs.iter().map(|s| s.amplitude).sum();
    let latency_s = scrs.first().map(|s| (dec.phasic.time_of(range.start + s.onset) - w.start_s).max(0.0));
    let iscr = phasic.windows(2).map(|p| 0.5 * (p[0] + p[1]) * dt).sum();
    let phasic_max = phasic.iter().cloned().fold(0.0, f64::max);
    Ok(EdaFeatures {
        n_scr: scrs.len(),
        latency_s,
        amp_sum_us: amp_sum,
        scr_mean: if scrs.is_empty() { 0.0 } else { amp_sum / scrs.len() as f64 },
        iscr,
        phasic_max,
        tonic_mean: tonic.iter().sum::<f64>() / tonic.len() as f64,
    })
}
