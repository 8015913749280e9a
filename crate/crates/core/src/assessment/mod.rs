//! Cognitive-health assessment: behavioural features per activity window,
//! performance scores, correlation analytics and cognitive group
//! classification.

pub mod cognitive;
pub mod features;
pub mod scores;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cognitive::{
    classify_cognitive_status, forward_select, ltpo_folds, AssessmentRecord, ClassifierConfig, CognitiveGroup, CognitiveReport,
    SlumsBanding,
};
pub use features::{extract_performance_features, performance_feature_names, PERFORMANCE_FEATURES};
pub use scores::{
    predict_scores, train_score_models, unsupervised_task_score, BaggedRegressor, BaggingConfig, ScoreModels, TaskScoreMethod,
};
pub use stats::{min_max_normalize, partial_correlation, pearson_r, CorrelationTable};

/// Per-column centring and scaling fitted on training rows; constant
/// columns keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::invalid("cannot standardise an empty set of rows"));
        };
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows differ in width"));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale = (0..d)
            .map(|j| {
                let sd = (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 1e-12 * mean[j].abs().max(1.0) {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}
