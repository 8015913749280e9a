//! Pulse (PPG/BVP) processing: artifact filtering, beats, heart rate, HRV.

pub mod beats;
pub mod hrv;
pub mod pmaf;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::signal::TimeSeries;

pub use beats::{detect_beats, heart_rate, BeatConfig, BeatSeries};
pub use hrv::{hrv_features, hrv_from_rr, HrvFeatures};
pub use pmaf::{pmaf, pmaf_with, PeriodSegmentation, PmafConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpgConfig {
    pub pmaf: PmafConfig,
    pub beats: BeatConfig,
}

/// Filter then detect beats.
pub fn process_ppg(raw: &TimeSeries, cfg: &PpgConfig) -> Result<BeatSeries> {
    let clean = pmaf_with(raw, &cfg.pmaf)?;
    beats::detect_beats_with(&clean, &cfg.beats)
}
