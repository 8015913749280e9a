//! Pipeline settings and their `key = value` file form.
//!
//! Later sources override earlier ones: built-in defaults, then the config
//! file, then command-line flags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activity::EmConfig;
use crate::assessment::{BaggingConfig, ClassifierConfig, SlumsBanding};
use crate::eda::EdaConfig;
use crate::error::{Error, Result};
use crate::ppg::PpgConfig;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Eda,
    Ppg,
    Gestures,
    Postures,
    Activities,
    Assess,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] =
        [Stage::Ingest, Stage::Eda, Stage::Ppg, Stage::Gestures, Stage::Postures, Stage::Activities, Stage::Assess, Stage::Report];

    pub fn name(self) -> &'static str {
        ["ingest", "eda", "ppg", "gestures", "postures", "activities", "assess", "report"][self as usize]
    }

    /// Stages whose results this one consumes directly.
    pub fn inputs(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Eda | Stage::Ppg | Stage::Gestures => &[Stage::Ingest],
            Stage::Postures => &[Stage::Gestures],
            Stage::Activities => &[Stage::Postures],
            Stage::Assess => &[Stage::Activities, Stage::Eda, Stage::Ppg],
            Stage::Report => &[Stage::Assess],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown stage `{}`", s.trim())))
    }
}

/// Parses a comma-separated stage list.
pub fn parse_stages(s: &str) -> Result<Vec<Stage>> {
    let mut out: Vec<Stage> = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskScoreKind {
    /// First principal direction of the standardised performance features.
    Principal,
    /// Fisher direction between cognitive groups.
    Discriminant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Cross-fitting folds over participants for every trained model.
    pub folds: usize,
    /// Six posture classes instead of four.
    pub extended_postures: bool,
    /// Cap on posture training windows per class and fold.
    pub posture_windows_per_class: usize,
    /// Decoded activities shorter than this are not scored.
    pub min_interval_s: f64,
    /// Survey used as the control variable of partial correlations.
    pub control: String,
    pub task_score: TaskScoreKind,
    pub eda: EdaConfig,
    pub ppg: PpgConfig,
    pub posture_c: f64,
    pub hdbn: EmConfig,
    pub bagging: BaggingConfig,
    pub classifier: ClassifierConfig,
    pub slums: SlumsBanding,
    /// Participant ids to process; empty means all.
    pub participants: Vec<String>,
    /// Stages whose artifacts are written; empty means all.
    pub stages: Vec<Stage>,
    /// Recompute selected stages even when a matching cache exists.
    pub force: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            folds: 3,
            extended_postures: false,
            posture_windows_per_class: 40,
            min_interval_s: 10.0,
            control: "age".into(),
            task_score: TaskScoreKind::Principal,
            eda: EdaConfig::default(),
            ppg: PpgConfig::default(),
            posture_c: 10.0,
            hdbn: EmConfig::default(),
            bagging: BaggingConfig::default(),
            classifier: ClassifierConfig::default(),
            slums: SlumsBanding::default(),
            participants: Vec::new(),
            stages: Vec::new(),
            force: false,
        }
    }
}

/// Keys accepted in a config file.
pub const CONFIG_KEYS: [&str; 27] = [
    "seed",
    "folds",
    "extended_postures",
    "posture_windows_per_class",
    "min_interval_s",
    "control",
    "task_score",
    "eda.alpha",
    "eda.lambda",
    "eda.denoise",
    "eda.scr_threshold_us",
    "eda.knot_spacing_s",
    "ppg.min_rel_prominence",
    "posture.c",
    "hdbn.max_iters",
    "hdbn.tol",
    "hdbn.smoothing",
    "hdbn.restarts",
    "bagging.bags",
    "bagging.c",
    "bagging.epsilon",
    "classifier.max_features",
    "classifier.c",
    "slums.mci_min",
    "slums.nci_min",
    "slums.max_score",
    "participants",
];

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse::<T>().map_err(|_| format!("`{value}` is not a valid value for `{key}`"))
}

fn positive(key: &str, value: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{key}` must be positive, got {value}"))
    }
}

impl PipelineConfig {
    /// Applies one setting; `stages` and `force` are accepted besides
    /// [`CONFIG_KEYS`].
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "seed" => {
                self.seed = parse(key, v)?;
                self.hdbn.seed = self.seed;
                self.bagging.seed = self.seed;
            }
            "folds" => {
                self.folds = parse(key, v)?;
                if self.folds < 2 {
                    return Err("`folds` must be at least 2".into());
                }
            }
            "extended_postures" => self.extended_postures = parse(key, v)?,
            "posture_windows_per_class" => {
                self.posture_windows_per_class = parse(key, v)?;
                if self.posture_windows_per_class < 3 {
                    return Err("`posture_windows_per_class` must be at least 3".into());
                }
            }
            "min_interval_s" => self.min_interval_s = parse(key, v)?,
            "control" => self.control = v.to_string(),
            "task_score" => {
                self.task_score = match v {
                    "principal" => TaskScoreKind::Principal,
                    "discriminant" => TaskScoreKind::Discriminant,
                    _ => return Err(format!("`task_score` must be principal or discriminant, got `{v}`")),
                }
            }
            "eda.alpha" => self.eda.alpha = positive(key, v)?,
            "eda.lambda" => self.eda.lambda_reg = positive(key, v)?,
            "eda.denoise" => self.eda.denoise = parse(key, v)?,
            "eda.scr_threshold_us" => self.eda.scr_threshold_us = positive(key, v)?,
            "eda.knot_spacing_s" => self.eda.knot_spacing_s = positive(key, v)?,
            "ppg.min_rel_prominence" => self.ppg.beats.min_rel_prominence = parse(key, v)?,
            "posture.c" => self.posture_c = positive(key, v)?,
            "hdbn.max_iters" => self.hdbn.max_iters = parse(key, v)?,
            "hdbn.tol" => self.hdbn.tol = positive(key, v)?,
            "hdbn.smoothing" => self.hdbn.smoothing = positive(key, v)?,
            "hdbn.restarts" => self.hdbn.restarts = parse(key, v)?,
            "bagging.bags" => self.bagging.bags = parse(key, v)?,
            "bagging.c" => self.bagging.c = positive(key, v)?,
            "bagging.epsilon" => self.bagging.epsilon = positive(key, v)?,
            "classifier.max_features" => self.classifier.max_features = parse(key, v)?,
            "classifier.c" => self.classifier.c = positive(key, v)?,
            "slums.mci_min" => self.slums.mci_min = parse(key, v)?,
            "slums.nci_min" => self.slums.nci_min = parse(key, v)?,
            "slums.max_score" => self.slums.max_score = parse(key, v)?,
            "participants" => {
                self.participants = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
            }
            "stages" => self.stages = parse_stages(v).map_err(|e| e.to_string())?,
            "force" => self.force = parse(key, v)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, path: &str, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let invalid = |message: String| Error::Validation { path: path.to_string(), line: i + 1, code: "E008", message };
            let Some((k, v)) = line.split_once('=') else {
                return Err(invalid(format!("expected `key = value`, found `{line}`")));
            };
            self.set(k, v).map_err(invalid)?;
        }
        self.validate()
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Validation {
            path: path.display().to_string(),
            line: 0,
            code: "E001",
            message: format!("cannot read config: {e}"),
        })?;
        self.apply_text(&path.display().to_string(), &text)
    }

    pub fn validate(&self) -> Result<()> {
        self.slums.validate()?;
        if self.classifier.max_features == 0 {
            return Err(Error::invalid("classifier.max_features must be at least 1"));
        }
        if self.bagging.bags == 0 {
            return Err(Error::invalid("bagging.bags must be at least 1"));
        }
        Ok(())
    }

    /// Whether the artifacts of `stage` are requested.
    pub fn selected(&self, stage: Stage) -> bool {
        self.stages.is_empty() || self.stages.contains(&stage)
    }
}
