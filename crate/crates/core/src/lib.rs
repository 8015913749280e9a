//! Analytics for automated cognitive-health assessment from wearable and
//! ambient sensors.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: sampled signal type, zero-phase filters, peak and crossing detection
//! - [`eda`]: wavelet artifact removal, convex tonic/phasic decomposition, SCR features
//! - [`ppg`]: periodic moving-average filtering, beat detection, heart rate and HRV
//! - [`acc`]: wrist accelerometer gestures (feature-weighted naive Bayes) and postures
//!   (sparse deconvolution + SMO support vector machine)
//! - [`activity`]: factorised hierarchical DBN over context tuples, EM and Viterbi
//! - [`assessment`]: performance features, score models, correlations, cognitive-group classification
//! - [`pipeline`]: file formats, ingestion, synthetic cohorts, staged orchestration

pub mod acc;
pub mod activity;
pub mod assessment;
pub mod error;
pub mod eda;
pub mod pipeline;
pub mod ppg;
pub mod signal;

pub use error::{Error, Result};
