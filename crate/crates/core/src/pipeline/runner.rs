//! Staged orchestration with content-keyed caches.
//!
//! Every stage result is cached under `out/cache` together with a key
//! hashed from its inputs and the settings it reads. A stage is recomputed
//! only when its key changes, its cache is missing or unreadable, or it is
//! selected and `force` is set. Artifacts are written for selected stages
//! only; unselected stages that a selected one depends on are loaded or
//! computed silently.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, Stage};
use super::formats::Diagnostic;
use super::ingest::{ingest, Dataset, ParticipantBundle, ACC_FILE, BVP_FILE, EDA_FILE, EVENTS_FILE, LABELS_FILE, SURVEYS_FILE};
use super::report::{self, Summary};
use super::stages::{self, stage_error, ActivityStage, AssessStage, EdaResult, GestureStage, PostureStage, PpgResult, COHORT};
use crate::error::{Error, Result};

/// Bumped whenever a cached layout or computation changes.
const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Cached<T> {
    key: String,
    data: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub participants: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
    /// Stages recomputed in this run, with the participant or `cohort`.
    pub computed: Vec<(Stage, String)>,
    pub summary: Option<Summary>,
}

/// Directory layout of a run.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn cache(&self, owner: &str, stage: Stage) -> PathBuf {
        self.root.join("cache").join(owner).join(format!("{}.json", stage.name()))
    }

    pub fn participant(&self, id: &str) -> PathBuf {
        self.root.join("participants").join(id)
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }
}

fn hash_of(parts: &[&[u8]]) -> String {
    let mut h = DefaultHasher::new();
    CACHE_VERSION.hash(&mut h);
    for p in parts {
        p.hash(&mut h);
    }
    format!("{:016x}", h.finish())
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).unwrap_or_default()
}

fn load<T: DeserializeOwned>(path: &Path, key: &str) -> Option<T> {
    let text = fs::read(path).ok()?;
    let c: Cached<T> = serde_json::from_slice(&text).ok()?;
    (c.key == key).then_some(c.data)
}

fn store<T: Serialize>(path: &Path, key: &str, data: &T) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d)?;
    }
    #[derive(Serialize)]
    struct CachedRef<'a, T> {
        key: &'a str,
        data: &'a T,
    }
    fs::write(path, serde_json::to_vec(&CachedRef { key, data })?)?;
    Ok(())
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    layout: Layout,
    computed: Vec<(Stage, String)>,
}

impl Ctx<'_> {
    /// Cached result of `stage` for `owner`, recomputed by `f` on a miss.
    fn cached<T: Serialize + DeserializeOwned>(&mut self, stage: Stage, owner: &str, key: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let path = self.layout.cache(owner, stage);
        let forced = self.cfg.force && self.cfg.selected(stage);
        if !forced {
            if let Some(v) = load(&path, key) {
                log::debug!("{stage} for {owner}: cache hit");
                return Ok(v);
            }
        }
        log::info!("{stage} for {owner}: computing");
        let v = f()?;
        store(&path, key, &v)?;
        self.computed.push((stage, owner.to_string()));
        Ok(v)
    }
}

/// Stages required to produce the selected ones.
pub fn needed_stages(cfg: &PipelineConfig) -> Vec<Stage> {
    let mut need: Vec<Stage> = Stage::ALL.into_iter().filter(|&s| cfg.selected(s)).collect();
    let mut i = 0;
    while i < need.len() {
        for &s in need[i].inputs() {
            if !need.contains(&s) {
                need.push(s);
            }
        }
        i += 1;
    }
    need.sort();
    need
}

/// Bundles named in `cfg.participants`, or all of them.
pub fn select_bundles(cfg: &PipelineConfig, bundles: &[ParticipantBundle]) -> Result<Vec<ParticipantBundle>> {
    if cfg.participants.is_empty() {
        return Ok(bundles.to_vec());
    }
    cfg.participants
        .iter()
        .map(|id| {
            bundles.iter().find(|b| &b.id == id).cloned().ok_or_else(|| Error::invalid(format!("unknown participant `{id}`")))
        })
        .collect()
}

pub fn run(cfg: &PipelineConfig, bundles: &[ParticipantBundle], out: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let bundles = select_bundles(cfg, bundles)?;
    if bundles.is_empty() {
        return Err(Error::invalid("no participants to process"));
    }
    let need = needed_stages(cfg);
    let mut ctx = Ctx { cfg, layout: Layout { root: out.to_path_buf() }, computed: Vec::new() };
    fs::create_dir_all(out)?;

    // ingest
    let mut datasets: Vec<Dataset> = Vec::new();
    let mut keys: Vec<String> = Vec::new();
    let mut diagnostics: Vec<Diagnostic> = Vec::new();
    let mut failed = None;
    for b in &bundles {
        let files: Vec<Vec<u8>> = [EDA_FILE, BVP_FILE, ACC_FILE, EVENTS_FILE, LABELS_FILE, SURVEYS_FILE]
            .iter()
            .map(|f| fs::read(b.path(f)).map(|mut v| {
                v.extend_from_slice(f.as_bytes());
                v
            }).unwrap_or_default())
            .collect();
        let key = hash_of(&files.iter().map(Vec::as_slice).collect::<Vec<_>>());
        let (ds, diags) = ctx.cached(Stage::Ingest, &b.id, &key, || {
            let r = ingest(b);
            let ds = if r.errors().next().is_none() { r.dataset.clone() } else { None };
            Ok((ds, r.diagnostics))
        })?;
        diagnostics.extend(diags.iter().cloned());
        match ds {
            Some(ds) => datasets.push(ds),
            None => failed = failed.or_else(|| diags.into_iter().find(Diagnostic::is_error)),
        }
        keys.push(key);
    }
    if cfg.selected(Stage::Ingest) || failed.is_some() {
        report::write_diagnostics(&out.join("diagnostics.csv"), &diagnostics)?;
    }
    for d in &diagnostics {
        if d.is_error() {
            log::error!("{d}");
        } else {
            log::warn!("{d}");
        }
    }
    if let Some(d) = failed {
        return Err(Error::Validation { path: d.path, line: d.line, code: d.code.as_str(), message: d.message });
    }
    let ids: Vec<String> = datasets.iter().map(|d| d.participant.clone()).collect();

    // physiology, per participant
    let mut eda: Vec<EdaResult> = Vec::new();
    let mut eda_keys = Vec::new();
    if need.contains(&Stage::Eda) {
        for (d, k) in datasets.iter().zip(&keys) {
            let key = hash_of(&[k.as_bytes(), &json(&cfg.eda)]);
            let r = ctx.cached(Stage::Eda, &d.participant, &key, || stages::eda_stage(d, cfg).map_err(|e| stage_error(Stage::Eda, &d.participant, e)))?;
            if cfg.selected(Stage::Eda) {
                report::write_eda(&ctx.layout.participant(&d.participant), &r)?;
            }
            eda.push(r);
            eda_keys.push(key);
        }
    }
    let mut ppg: Vec<PpgResult> = Vec::new();
    let mut ppg_keys = Vec::new();
    if need.contains(&Stage::Ppg) {
        for (d, k) in datasets.iter().zip(&keys) {
            let key = hash_of(&[k.as_bytes(), &json(&cfg.ppg)]);
            let r = ctx.cached(Stage::Ppg, &d.participant, &key, || stages::ppg_stage(d, cfg).map_err(|e| stage_error(Stage::Ppg, &d.participant, e)))?;
            if cfg.selected(Stage::Ppg) {
                report::write_ppg(&ctx.layout.participant(&d.participant), &r, &cfg.ppg.beats)?;
            }
            ppg.push(r);
            ppg_keys.push(key);
        }
    }

    // cohort stages
    let mut summary = None;
    if need.contains(&Stage::Gestures) {
        let cohort_key = hash_of(&keys.iter().map(|k| k.as_bytes()).collect::<Vec<_>>());
        let gkey = hash_of(&[cohort_key.as_bytes(), &json(&cfg.folds)]);
        let g: GestureStage = ctx.cached(Stage::Gestures, COHORT, &gkey, || stages::gesture_stage(&datasets, cfg))?;
        if cfg.selected(Stage::Gestures) {
            for pg in &g.participants {
                report::write_gestures(&ctx.layout.participant(&pg.participant), pg)?;
            }
            for (f, m) in g.models.iter().enumerate() {
                report::write_json(&ctx.layout.models().join(format!("gestures_fold{f}.json")), m)?;
            }
        }
        if need.contains(&Stage::Postures) {
            let pkey = hash_of(&[
                gkey.as_bytes(),
                &json(&(cfg.extended_postures, cfg.posture_windows_per_class, cfg.posture_c)),
            ]);
            let p: PostureStage = ctx.cached(Stage::Postures, COHORT, &pkey, || stages::posture_stage(&datasets, &g, cfg))?;
            if cfg.selected(Stage::Postures) {
                for (pg, pp) in g.participants.iter().zip(&p.participants) {
                    report::write_postures(&ctx.layout.participant(&pp.participant), pg, pp)?;
                }
                for (f, m) in p.models.iter().enumerate() {
                    report::write_json(&ctx.layout.models().join(format!("postures_fold{f}.json")), m)?;
                }
            }
            if need.contains(&Stage::Activities) {
                let akey = hash_of(&[pkey.as_bytes(), &json(&cfg.hdbn)]);
                let a: ActivityStage = ctx.cached(Stage::Activities, COHORT, &akey, || stages::activity_stage(&datasets, &g, &p, cfg))?;
                if cfg.selected(Stage::Activities) {
                    for pa in &a.participants {
                        report::write_activities(&ctx.layout.participant(&pa.participant), pa)?;
                    }
                    for (f, m) in a.models.iter().enumerate() {
                        report::write_json(&ctx.layout.models().join(format!("activities_fold{f}.json")), m)?;
                    }
                }
                if need.contains(&Stage::Assess) {
                    let settings = json(&(
                        cfg.min_interval_s,
                        &cfg.control,
                        cfg.task_score,
                        &cfg.bagging,
                        &cfg.classifier,
                        &cfg.slums,
                        &cfg.ppg.beats,
                        cfg.eda.scr_threshold_us,
                    ));
                    let mut parts: Vec<&[u8]> = vec![akey.as_bytes(), &settings];
                    parts.extend(eda_keys.iter().chain(&ppg_keys).map(|k| k.as_bytes()));
                    let skey = hash_of(&parts);
                    let s: AssessStage = ctx.cached(Stage::Assess, COHORT, &skey, || stages::assess_stage(&datasets, &eda, &ppg, &a, cfg))?;
                    if cfg.selected(Stage::Assess) {
                        report::write_assessment(out, &s)?;
                    }
                    if need.contains(&Stage::Report) {
                        let sum = Summary::compute(&g, &p, &a, &s).map_err(|e| stage_error(Stage::Report, COHORT, e))?;
                        if cfg.selected(Stage::Report) {
                            sum.write(out)?;
                        }
                        summary = Some(sum);
                    }
                }
            }
        }
    }
    Ok(RunOutcome { participants: ids, diagnostics, computed: ctx.computed, summary })
}
