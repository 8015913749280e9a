//! Stage computations. Participant-level stages (EDA, PPG) see one dataset;
//! model-based stages cross-fit over participant folds so that no
//! participant is ever scored by a model trained on its own labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, Stage, TaskScoreKind};
use super::formats::{Label, LabelKind};
use super::ingest::Dataset;
use crate::acc::{
    preprocess_acc, train_fwnb, window_starts, AccStream, FwnbModel, GestureTemplate, Posture, PostureConfig, PostureModel,
    PostureSample, GESTURE_COUNT,
};
use crate::activity::{
    em_train, intervals_from_labels, viterbi_decode, ActivityInterval, Alphabet, ContextTuple, HdbnModel, LabeledSequence,
    ACTIVITY_COUNT,
};
use crate::assessment::scores::MIN_TRAINING_RECORDS;
use crate::assessment::{
    classify_cognitive_status, extract_performance_features, performance_feature_names, predict_scores, train_score_models,
    unsupervised_task_score, AssessmentRecord, CognitiveGroup, CognitiveReport, CorrelationTable, Standardizer, TaskScoreMethod,
};
use crate::eda::{extract_eda_features, process_eda, EdaConfig, EdaDecomposition, EdaFeatures, MIN_DECOMPOSE_LEN};
use crate::error::{Error, Result};
use crate::ppg::beats::detect_beats_with;
use crate::ppg::hrv::hrv_features_with;
use crate::ppg::{heart_rate, pmaf_with, BeatSeries, HrvFeatures, PpgConfig};
use crate::signal::{TimeSeries, Window};

/// Gesture window length.
pub const WINDOW_S: f64 = 2.0;
/// Shortest pulse segment handed to beat detection.
pub const MIN_BVP_S: f64 = 10.0;
const EPS: f64 = 1e-6;

/// Placeholder participant id of failures that concern the whole cohort.
pub const COHORT: &str = "cohort";

pub(crate) fn stage_error(stage: Stage, participant: &str, cause: Error) -> Error {
    match cause {
        e @ Error::Stage { .. } => e,
        cause => Error::Stage { stage: stage.name().to_string(), participant: participant.to_string(), cause: Box::new(cause) },
    }
}

// ---------------------------------------------------------------- physiology

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaResult {
    /// One decomposition per signal segment long enough to decompose.
    pub segments: Vec<EdaDecomposition>,
}

impl EdaResult {
    /// Features over `[start_s, end_s)` clipped to the segment overlapping it most.
    pub fn features(&self, start_s: f64, end_s: f64, threshold_us: f64) -> Option<EdaFeatures> {
        let dec = best_overlap(&self.segments, start_s, end_s, |d| (d.y.t0(), d.y.t0() + d.y.duration_s()))?;
        let (lo, hi) = (start_s.max(dec.y.t0()), end_s.min(dec.y.t0() + dec.y.duration_s()));
        let w = Window::new(lo, hi).ok()?;
        extract_eda_features(dec, &w, threshold_us).ok()
    }
}

fn best_overlap<T>(items: &[T], start: f64, end: f64, span: impl Fn(&T) -> (f64, f64)) -> Option<&T> {
    items
        .iter()
        .map(|it| {
            let (a, b) = span(it);
            (it, end.min(b) - start.max(a))
        })
        .filter(|(_, o)| *o > 0.0)
        .fold(None, |best: Option<(&T, f64)>, (it, o)| match best {
            Some((_, bo)) if bo >= o => best,
            _ => Some((it, o)),
        })
        .map(|(it, _)| it)
}

pub fn eda_stage(ds: &Dataset, cfg: &PipelineConfig) -> Result<EdaResult> {
    eda_segments(&ds.participant, &ds.eda, &cfg.eda)
}

/// Cleans and decomposes every segment long enough to decompose.
pub fn eda_segments(owner: &str, eda: &[TimeSeries], cfg: &EdaConfig) -> Result<EdaResult> {
    let mut segments = Vec::new();
    for seg in eda {
        if seg.len() < MIN_DECOMPOSE_LEN {
            log::warn!("{owner}: skipping {}-sample EDA segment at {} s", seg.len(), seg.t0());
            continue;
        }
        segments.push(process_eda(seg, cfg)?);
    }
    if segments.is_empty() {
        return Err(Error::TooShort { needed: MIN_DECOMPOSE_LEN, got: eda.iter().map(TimeSeries::len).max().unwrap_or(0) });
    }
    Ok(EdaResult { segments })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpgResult {
    /// Beats of each pulse segment.
    pub beats: Vec<BeatSeries>,
    /// Filtered pulse of each segment.
    pub filtered: Vec<TimeSeries>,
}

impl PpgResult {
    fn segment_for(&self, start_s: f64, end_s: f64) -> Option<&BeatSeries> {
        let spans: Vec<(usize, (f64, f64))> =
            self.filtered.iter().enumerate().map(|(i, f)| (i, (f.t0(), f.t0() + f.duration_s()))).collect();
        best_overlap(&spans, start_s, end_s, |s| s.1).map(|(i, _)| &self.beats[*i])
    }

    pub fn hrv(&self, start_s: f64, end_s: f64, cfg: &PipelineConfig) -> Option<HrvFeatures> {
        let b = self.segment_for(start_s, end_s)?;
        hrv_features_with(b, &Window::new(start_s, end_s).ok()?, &cfg.ppg.beats).ok()
    }

    pub fn heart_rate(&self, start_s: f64, end_s: f64) -> Option<f64> {
        heart_rate(self.segment_for(start_s, end_s)?, &Window::new(start_s, end_s).ok()?).ok()
    }
}

pub fn ppg_stage(ds: &Dataset, cfg: &PipelineConfig) -> Result<PpgResult> {
    ppg_segments(&ds.participant, &ds.bvp, &cfg.ppg)
}

/// Filters every pulse segment of at least [`MIN_BVP_S`] and finds its beats.
pub fn ppg_segments(owner: &str, bvp: &[TimeSeries], cfg: &PpgConfig) -> Result<PpgResult> {
    let mut beats = Vec::new();
    let mut filtered = Vec::new();
    for seg in bvp {
        if seg.duration_s() < MIN_BVP_S {
            log::warn!("{owner}: skipping {:.1} s pulse segment at {} s", seg.duration_s(), seg.t0());
            continue;
        }
        let clean = pmaf_with(seg, &cfg.pmaf)?;
        beats.push(detect_beats_with(&clean, &cfg.beats)?);
        filtered.push(clean);
    }
    if beats.is_empty() {
        return Err(Error::Degenerate(format!("no pulse segment of at least {MIN_BVP_S} s")));
    }
    Ok(PpgResult { beats, filtered })
}

// ---------------------------------------------------------------- ground truth

fn labels_of(ds: &Dataset, kind: LabelKind) -> Vec<&Label> {
    ds.labels.iter().flatten().filter(|l| l.kind == kind).collect()
}

/// Gesture of the only instance touching `[start, end)`, when it lies
/// entirely inside.
pub fn gesture_truth(ds: &Dataset, start: f64, end: f64) -> Option<usize> {
    let touching: Vec<&Label> =
        labels_of(ds, LabelKind::Gesture).into_iter().filter(|l| l.end_s > start + EPS && l.start_s < end - EPS).collect();
    match touching.as_slice() {
        [l] if l.start_s >= start - EPS && l.end_s <= end + EPS => Some(l.id),
        _ => None,
    }
}

/// Posture of the labelled span covering `[start, end)`.
pub fn posture_truth(ds: &Dataset, start: f64, end: f64) -> Option<usize> {
    labels_of(ds, LabelKind::Posture).into_iter().find(|l| l.start_s <= start + EPS && l.end_s >= end - EPS).map(|l| l.id)
}

pub fn activity_at(ds: &Dataset, t: f64) -> Option<usize> {
    labels_of(ds, LabelKind::Activity).into_iter().find(|l| l.start_s <= t && t < l.end_s).map(|l| l.id)
}

pub fn truth_intervals(ds: &Dataset) -> Vec<ActivityInterval> {
    labels_of(ds, LabelKind::Activity)
        .into_iter()
        .map(|l| ActivityInterval { label: l.id, start_s: l.start_s, end_s: l.end_s })
        .collect()
}

/// Observed `[tc, seq, int]` of the labelled activity with label `activity`
/// overlapping `[start, end)` most.
pub fn observed_scores(ds: &Dataset, activity: usize, start: f64, end: f64) -> Option<[f64; 3]> {
    let pick = |kind| {
        let rows: Vec<&Label> = labels_of(ds, kind).into_iter().filter(|l| l.id == activity).collect();
        best_overlap(&rows, start, end, |l| (l.start_s, l.end_s)).map(|l| l.value)
    };
    Some([pick(LabelKind::Tc)?, pick(LabelKind::Seq)?, pick(LabelKind::Int)?])
}

fn has_labels(ds: &Dataset, kinds: &[LabelKind]) -> bool {
    kinds.iter().all(|&k| !labels_of(ds, k).is_empty())
}

// ---------------------------------------------------------------- folds

/// Participant-to-fold assignment: labelled and unlabelled participants are
/// each dealt round-robin in id order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Folds {
    pub count: usize,
    pub of: Vec<usize>,
    pub labelled: Vec<bool>,
}

impl Folds {
    pub fn assign(labelled: Vec<bool>, requested: usize) -> Result<Self> {
        let n_lab = labelled.iter().filter(|&&l| l).count();
        if n_lab < 2 {
            return Err(Error::Degenerate(format!("cross-fitting needs at least two labelled participants, found {n_lab}")));
        }
        let count = requested.clamp(2, n_lab);
        let (mut a, mut b) = (0, 0);
        let of = labelled
            .iter()
            .map(|&l| {
                let c = if l { &mut a } else { &mut b };
                *c += 1;
                (*c - 1) % count
            })
            .collect();
        Ok(Self { count, of, labelled })
    }

    /// Labelled participants outside fold `f`.
    pub fn training(&self, f: usize) -> Vec<usize> {
        (0..self.of.len()).filter(|&i| self.labelled[i] && self.of[i] != f).collect()
    }
}

// ---------------------------------------------------------------- accelerometer

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub segment: usize,
    pub offset: usize,
    pub len: usize,
    pub start_s: f64,
    pub end_s: f64,
}

/// Drift-free accelerometer segments and their 2 s, 50 %-overlap windows.
pub struct AccView {
    pub segments: Vec<Option<AccStream>>,
    pub windows: Vec<WindowSpec>,
}

impl AccView {
    pub fn new(ds: &Dataset) -> Result<Self> {
        let mut segments = Vec::new();
        let mut windows = Vec::new();
        for (k, seg) in ds.acc.iter().enumerate() {
            let len = (WINDOW_S * seg.rate_hz()).round() as usize;
            let clean = if seg.len() >= len { preprocess_acc(seg).ok() } else { None };
            if clean.is_none() {
                log::warn!("{}: accelerometer segment {k} ({} samples) not usable", ds.participant, seg.len());
            }
            if clean.is_some() {
                for off in window_starts(seg.len(), len, len / 2) {
                    let start_s = seg.t0() + off as f64 / seg.rate_hz();
                    windows.push(WindowSpec { segment: k, offset: off, len, start_s, end_s: start_s + WINDOW_S });
                }
            }
            segments.push(clean);
        }
        if windows.is_empty() {
            return Err(Error::Degenerate("no accelerometer window".into()));
        }
        Ok(Self { segments, windows })
    }

    pub fn window(&self, w: &WindowSpec) -> Result<AccStream> {
        self.segments[w.segment].as_ref().ok_or_else(|| Error::invalid("window of an unusable segment"))?.slice(w.offset..w.offset + w.len)
    }

    /// Samples of `[start, end)` from the segment holding it entirely.
    pub fn span(&self, start: f64, end: f64) -> Option<AccStream> {
        self.segments.iter().flatten().find_map(|s| {
            let i0 = ((start - s.t0()) * s.rate_hz()).round();
            let n = ((end - start) * s.rate_hz()).round();
            (i0 >= 0.0 && n > 0.0 && (i0 + n) as usize <= s.len()).then(|| s.slice(i0 as usize..(i0 + n) as usize).ok()).flatten()
        })
    }
}

/// Slice grid over the occupied period: slice `k` covers
/// `[origin_s + k, origin_s + k + 1)` and reads the window listed for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePlan {
    pub origin_s: f64,
    pub windows: Vec<usize>,
}

/// From the first room entry to the last room exit, or the whole
/// accelerometer record when no room sensor fired.
pub fn occupied_span(ds: &Dataset, view: &AccView) -> (f64, f64) {
    let rooms: Vec<_> = ds.events.iter().filter(|e| e.room().is_some()).collect();
    let first_on = rooms.iter().find(|e| e.state).map(|e| e.timestamp_s);
    let last = rooms.last().map(|e| e.timestamp_s);
    match (first_on, last) {
        (Some(a), Some(b)) if b > a => (a.floor(), b.ceil()),
        _ => (view.windows[0].start_s.floor(), view.windows.last().unwrap().end_s.floor()),
    }
}

pub fn slice_plan(ds: &Dataset, view: &AccView) -> Result<SlicePlan> {
    let (origin_s, end) = occupied_span(ds, view);
    let count = (end - origin_s).round().max(1.0) as usize;
    let mut chosen: Vec<Option<usize>> = Vec::with_capacity(count);
    for k in 0..count {
        let t = origin_s + k as f64;
        let pick = view
            .windows
            .iter()
            .enumerate()
            .filter(|(_, w)| w.start_s <= t + 0.5 + EPS && w.end_s >= t + 1.0 - EPS)
            .max_by(|a, b| a.1.start_s.total_cmp(&b.1.start_s))
            .map(|(i, _)| i);
        chosen.push(pick);
    }
    let first = chosen.iter().flatten().next().copied().ok_or_else(|| Error::Degenerate("no window covers the occupied period".into()))?;
    let mut last = first;
    let windows = chosen
        .into_iter()
        .map(|c| {
            if let Some(i) = c {
                last = i;
            }
            last
        })
        .collect();
    Ok(SlicePlan { origin_s, windows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub spec: WindowSpec,
    pub gesture: usize,
    pub score: f64,
    pub gesture_truth: Option<usize>,
    pub posture_truth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantGestures {
    pub participant: String,
    pub fold: usize,
    pub windows: Vec<WindowResult>,
    pub slices: SlicePlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureFold {
    pub training: Vec<String>,
    pub templates: Vec<GestureTemplate>,
    pub fwnb: FwnbModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureStage {
    pub folds: Folds,
    pub models: Vec<GestureFold>,
    pub participants: Vec<ParticipantGestures>,
}

fn templates_for(datasets: &[Dataset], views: &[AccView], training: &[usize]) -> Result<Vec<GestureTemplate>> {
    let mut isolated: BTreeMap<usize, Vec<AccStream>> = BTreeMap::new();
    let mut in_session: BTreeMap<usize, Vec<AccStream>> = BTreeMap::new();
    for &i in training {
        let postures = labels_of(&datasets[i], LabelKind::Posture);
        for l in labels_of(&datasets[i], LabelKind::Gesture) {
            let Some(seg) = views[i].span(l.start_s, l.end_s) else { continue };
            let inside = postures.iter().any(|p| p.end_s > l.start_s && p.start_s < l.end_s);
            if inside { &mut in_session } else { &mut isolated }.entry(l.id).or_default().push(seg);
        }
    }
    (1..=GESTURE_COUNT)
        .filter_map(|g| {
            let ex = match isolated.get(&g) {
                Some(v) if !v.is_empty() => v,
                _ => {
                    log::warn!("gesture {g}: no isolated instances; building its template from session instances");
                    in_session.get(&g)?
                }
            };
            Some(GestureTemplate::from_examples(g, ex))
        })
        .collect()
}

pub fn gesture_stage(datasets: &[Dataset], cfg: &PipelineConfig) -> Result<GestureStage> {
    let st = Stage::Gestures;
    let views: Vec<AccView> =
        datasets.iter().map(|d| AccView::new(d).map_err(|e| stage_error(st, &d.participant, e))).collect::<Result<_>>()?;
    let labelled: Vec<bool> = datasets.iter().map(|d| has_labels(d, &[LabelKind::Gesture, LabelKind::Posture])).collect();
    let folds = Folds::assign(labelled, cfg.folds).map_err(|e| stage_error(st, COHORT, e))?;

    let mut truths: Vec<Vec<(Option<usize>, Option<usize>)>> = Vec::new();
    for (d, v) in datasets.iter().zip(&views) {
        truths.push(v.windows.iter().map(|w| (gesture_truth(d, w.start_s, w.end_s), posture_truth(d, w.start_s, w.end_s))).collect());
    }

    let mut models = Vec::new();
    for f in 0..folds.count {
        let training = folds.training(f);
        let templates = templates_for(datasets, &views, &training).map_err(|e| stage_error(st, COHORT, e))?;
        let mut segs = Vec::new();
        for &i in &training {
            for (w, t) in views[i].windows.iter().zip(&truths[i]) {
                if let (Some(g), Some(_)) = t {
                    segs.push((views[i].window(w).map_err(|e| stage_error(st, &datasets[i].participant, e))?, *g));
                }
            }
        }
        let fwnb = train_fwnb(&segs).map_err(|e| stage_error(st, COHORT, e))?;
        log::info!("gesture fold {f}: {} training windows from {} participants", segs.len(), training.len());
        models.push(GestureFold { training: training.iter().map(|&i| datasets[i].participant.clone()).collect(), templates, fwnb });
    }

    let mut participants = Vec::new();
    for (i, d) in datasets.iter().enumerate() {
        let run = || -> Result<ParticipantGestures> {
            let model = &models[folds.of[i]].fwnb;
            let mut windows = Vec::with_capacity(views[i].windows.len());
            for (w, t) in views[i].windows.iter().zip(&truths[i]) {
                let (gesture, score) = crate::acc::classify_gesture(model, &views[i].window(w)?)?;
                windows.push(WindowResult { spec: *w, gesture, score, gesture_truth: t.0, posture_truth: t.1 });
            }
            Ok(ParticipantGestures { participant: d.participant.clone(), fold: folds.of[i], windows, slices: slice_plan(d, &views[i])? })
        };
        participants.push(run().map_err(|e| stage_error(st, &d.participant, e))?);
    }
    Ok(GestureStage { folds, models, participants })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantPostures {
    pub participant: String,
    /// Posture id per window; only windows read by a slice are classified.
    pub postures: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostureStage {
    pub models: Vec<PostureModel>,
    pub participants: Vec<ParticipantPostures>,
}

pub fn posture_classes(cfg: &PipelineConfig) -> &'static [Posture] {
    if cfg.extended_postures {
        &Posture::EXTENDED
    } else {
        &Posture::BASE
    }
}

/// Every `n / cap`-th element, keeping at most `cap`.
fn evenly<T: Clone>(v: &[T], cap: usize) -> Vec<T> {
    if v.len() <= cap {
        return v.to_vec();
    }
    (0..cap).map(|k| v[k * v.len() / cap].clone()).collect()
}

pub fn posture_stage(datasets: &[Dataset], gestures: &GestureStage, cfg: &PipelineConfig) -> Result<PostureStage> {
    let st = Stage::Postures;
    let views: Vec<AccView> =
        datasets.iter().map(|d| AccView::new(d).map_err(|e| stage_error(st, &d.participant, e))).collect::<Result<_>>()?;
    let classes = posture_classes(cfg);
    let pcfg = PostureConfig { c: cfg.posture_c, ..PostureConfig::default() };
    let mut models = Vec::new();
    for (f, fold) in gestures.models.iter().enumerate() {
        let mut by_class: BTreeMap<Posture, Vec<PostureSample>> = BTreeMap::new();
        for i in gestures.folds.training(f) {
            for r in &gestures.participants[i].windows {
                let (Some(g), Some(p)) = (r.gesture_truth, r.posture_truth.and_then(Posture::from_id)) else { continue };
                if !classes.contains(&p) {
                    continue;
                }
                let window = views[i].window(&r.spec).map_err(|e| stage_error(st, &datasets[i].participant, e))?;
                by_class.entry(p).or_default().push(PostureSample { window, gesture: g, posture: p });
            }
        }
        let present: Vec<Posture> = classes.iter().copied().filter(|p| by_class.contains_key(p)).collect();
        let samples: Vec<PostureSample> = by_class.values().flat_map(|v| evenly(v, cfg.posture_windows_per_class)).collect();
        log::info!("posture fold {f}: {} training windows over {} classes", samples.len(), present.len());
        let model = PostureModel::train(fold.templates.clone(), &samples, &present, &pcfg).map_err(|e| stage_error(st, COHORT, e))?;
        models.push(model);
    }

    let mut participants = Vec::new();
    for (i, d) in datasets.iter().enumerate() {
        let pg = &gestures.participants[i];
        let model = &models[pg.fold];
        let mut postures = vec![None; pg.windows.len()];
        let mut needed: Vec<usize> = pg.slices.windows.clone();
        needed.sort_unstable();
        needed.dedup();
        for w in needed {
            let r = &pg.windows[w];
            let seg = views[i].window(&r.spec).map_err(|e| stage_error(st, &d.participant, e))?;
            let p = model.classify_with_gesture(&seg, r.gesture).map_err(|e| stage_error(st, &d.participant, e))?;
            postures[w] = Some(p.id());
        }
        participants.push(ParticipantPostures { participant: d.participant.clone(), postures });
    }
    Ok(PostureStage { models, participants })
}

// ---------------------------------------------------------------- activities

/// Context tuple of every slice: classified gesture and posture of the
/// slice's window, the occupied room at mid-slice and the first object
/// touched during the slice.
pub fn context_tuples(ds: &Dataset, g: &ParticipantGestures, p: &ParticipantPostures) -> Result<Vec<ContextTuple>> {
    let mut room_on: BTreeMap<usize, f64> = BTreeMap::new();
    let mut ev = ds.events.iter().peekable();
    let mut out = Vec::with_capacity(g.slices.windows.len());
    for (k, &w) in g.slices.windows.iter().enumerate() {
        let t = g.slices.origin_s + k as f64;
        let mid = t + 0.5;
        let mut object = None;
        while let Some(e) = ev.peek() {
            if e.timestamp_s >= t + 1.0 {
                break;
            }
            if let Some(r) = e.room() {
                if e.timestamp_s <= mid {
                    if e.state {
                        room_on.insert(r, e.timestamp_s);
                    } else {
                        room_on.remove(&r);
                    }
                } else {
                    break;
                }
            }
            if let Some(o) = e.object() {
                if e.state && e.timestamp_s >= t && object.is_none() {
                    object = Some(o);
                }
            }
            ev.next();
        }
        // events between mid-slice and the slice end that were not consumed
        // are read on the next slice; object touches there are caught below
        if object.is_none() {
            object = ds
                .events
                .iter()
                .find(|e| e.state && e.timestamp_s >= t && e.timestamp_s < t + 1.0 && e.object().is_some())
                .and_then(|e| e.object());
        }
        let ambient = room_on.iter().max_by(|a, b| a.1.total_cmp(b.1)).map(|(r, _)| *r);
        let posture = p.postures[w].ok_or_else(|| Error::invalid(format!("window {w} has no posture")))?;
        out.push(ContextTuple { slice: k, gesture: g.windows[w].gesture, posture, ambient, object });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantActivities {
    pub participant: String,
    pub fold: usize,
    pub origin_s: f64,
    pub tuples: Vec<ContextTuple>,
    /// Labelled activity per slice.
    pub truth: Vec<Option<usize>>,
    pub decoded: Vec<usize>,
    pub log_probability: f64,
    /// Decoded intervals on the recording clock.
    pub intervals: Vec<ActivityInterval>,
    pub truth_intervals: Vec<ActivityInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityStage {
    pub models: Vec<HdbnModel>,
    pub participants: Vec<ParticipantActivities>,
}

pub fn alphabet(cfg: &PipelineConfig) -> Alphabet {
    Alphabet::new(posture_classes(cfg).len())
}

/// Maximal runs of labelled slices as supervised training sequences.
fn labelled_runs(tuples: &[ContextTuple], truth: &[Option<usize>]) -> Vec<LabeledSequence> {
    let mut out = Vec::new();
    let mut cur: (Vec<ContextTuple>, Vec<usize>) = (Vec::new(), Vec::new());
    for (t, l) in tuples.iter().zip(truth) {
        match l {
            Some(l) => {
                cur.0.push(*t);
                cur.1.push(*l);
            }
            None if !cur.0.is_empty() => {
                let (a, b) = std::mem::take(&mut cur);
                out.push(LabeledSequence { tuples: a, labels: Some(b) });
            }
            None => {}
        }
    }
    if !cur.0.is_empty() {
        out.push(LabeledSequence { tuples: cur.0, labels: Some(cur.1) });
    }
    out
}

pub fn activity_stage(datasets: &[Dataset], gestures: &GestureStage, postures: &PostureStage, cfg: &PipelineConfig) -> Result<ActivityStage> {
    let st = Stage::Activities;
    let mut tuples = Vec::new();
    let mut truths = Vec::new();
    for (i, d) in datasets.iter().enumerate() {
        let g = &gestures.participants[i];
        tuples.push(context_tuples(d, g, &postures.participants[i]).map_err(|e| stage_error(st, &d.participant, e))?);
        truths.push((0..g.slices.windows.len()).map(|k| activity_at(d, g.slices.origin_s + k as f64 + 0.5)).collect::<Vec<_>>());
    }
    let labelled: Vec<bool> = truths.iter().map(|t| t.iter().any(Option::is_some)).collect();
    let folds = Folds::assign(labelled, cfg.folds).map_err(|e| stage_error(st, COHORT, e))?;
    let mut models = Vec::new();
    for f in 0..folds.count {
        let seqs: Vec<LabeledSequence> = folds.training(f).into_iter().flat_map(|i| labelled_runs(&tuples[i], &truths[i])).collect();
        let fit = em_train(&seqs, ACTIVITY_COUNT, alphabet(cfg), &cfg.hdbn).map_err(|e| stage_error(st, COHORT, e))?;
        log::info!("activity fold {f}: {} sequences, log-likelihood {:.3}", seqs.len(), fit.log_likelihood);
        models.push(fit.model);
    }
    let mut participants = Vec::new();
    for (i, d) in datasets.iter().enumerate() {
        let fold = folds.of[i];
        let dec = viterbi_decode(&models[fold], &tuples[i]).map_err(|e| stage_error(st, &d.participant, e))?;
        let origin_s = gestures.participants[i].slices.origin_s;
        let slices: Vec<usize> = (0..tuples[i].len()).collect();
        let intervals = intervals_from_labels(&dec.labels, &slices)
            .into_iter()
            .map(|iv| ActivityInterval { label: iv.label, start_s: iv.start_s + origin_s, end_s: iv.end_s + origin_s })
            .collect();
        participants.push(ParticipantActivities {
            participant: d.participant.clone(),
            fold,
            origin_s,
            tuples: tuples[i].clone(),
            truth: truths[i].clone(),
            decoded: dec.labels,
            log_probability: dec.log_probability,
            intervals,
            truth_intervals: truth_intervals(d),
        });
    }
    Ok(ActivityStage { models, participants })
}

// ---------------------------------------------------------------- assessment

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub participant: String,
    pub activity: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub performance: Vec<f64>,
    pub eda: Option<Vec<f64>>,
    pub hrv: Option<Vec<f64>>,
    pub heart_rate_bpm: Option<f64>,
    /// Labelled `[tc, seq, int]`.
    pub observed: Option<[f64; 3]>,
    /// Cross-fitted `[tc, seq, int]`; absent when too few labelled records
    /// were available to train on.
    pub predicted: Option<[f64; 3]>,
    pub ts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub participant: String,
    pub group: Option<CognitiveGroup>,
    pub features: Vec<f64>,
    pub surveys: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessStage {
    pub intervals: Vec<IntervalRecord>,
    pub feature_names: Vec<String>,
    pub participants: Vec<ParticipantSummary>,
    pub classification: Option<CognitiveReport>,
    pub pearson: Option<CorrelationTable>,
    pub partial: Option<CorrelationTable>,
    /// Whether score models were trained for every fold.
    pub supervised: bool,
}

pub fn interval_feature_names() -> Vec<String> {
    let mut names = performance_feature_names();
    names.extend(EdaFeatures::NAMES.iter().map(|n| format!("eda_{n}")));
    names.extend(HrvFeatures::NAMES.iter().map(|n| format!("hrv_{n}")));
    names.push("heart_rate_bpm".into());
    names.push("ts".into());
    names
}

fn mean_columns(rows: &[Vec<f64>]) -> Option<Vec<f64>> {
    let first = rows.first()?;
    Some((0..first.len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect())
}

pub fn assess_stage(
    datasets: &[Dataset],
    eda: &[EdaResult],
    ppg: &[PpgResult],
    activities: &ActivityStage,
    cfg: &PipelineConfig,
) -> Result<AssessStage> {
    let st = Stage::Assess;
    let mut intervals = Vec::new();
    let mut folds_of = Vec::new();
    for (i, d) in datasets.iter().enumerate() {
        let pa = &activities.participants[i];
        for iv in pa.intervals.iter().filter(|iv| iv.duration_s() >= cfg.min_interval_s) {
            let performance =
                extract_performance_features(&d.events, iv.start_s, iv.end_s).map_err(|e| stage_error(st, &d.participant, e))?.to_vec();
            let eda_f = eda[i].features(iv.start_s, iv.end_s, cfg.eda.scr_threshold_us).map(|f| f.to_vec(iv.duration_s()));
            intervals.push(IntervalRecord {
                participant: d.participant.clone(),
                activity: iv.label,
                start_s: iv.start_s,
                end_s: iv.end_s,
                performance,
                eda: eda_f,
                hrv: ppg[i].hrv(iv.start_s, iv.end_s, cfg).map(|h| h.to_vec()),
                heart_rate_bpm: ppg[i].heart_rate(iv.start_s, iv.end_s),
                observed: observed_scores(d, iv.label, iv.start_s, iv.end_s),
                predicted: None,
                ts: 0.0,
            });
            folds_of.push(pa.fold);
        }
    }
    if intervals.len() < 2 {
        return Err(stage_error(st, COHORT, Error::TooShort { needed: 2, got: intervals.len() }));
    }

    // supervised scores, cross-fitted over the activity folds
    let folds = folds_of.iter().copied().max().unwrap_or(0) + 1;
    let mut supervised = true;
    for f in 0..folds {
        let train: Vec<&IntervalRecord> = intervals.iter().zip(&folds_of).filter(|(r, &k)| k != f && r.observed.is_some()).map(|(r, _)| r).collect();
        if train.len() < MIN_TRAINING_RECORDS {
            log::warn!("fold {f}: {} labelled activity records, need {MIN_TRAINING_RECORDS}; supervised scores skipped", train.len());
            supervised = false;
            continue;
        }
        let xs: Vec<Vec<f64>> = train.iter().map(|r| r.performance.clone()).collect();
        let ys: Vec<[f64; 3]> = train.iter().map(|r| r.observed.unwrap()).collect();
        let mut bag = cfg.bagging;
        bag.seed = cfg.bagging.seed.wrapping_add(f as u64);
        let models = train_score_models(&xs, &ys, &bag).map_err(|e| stage_error(st, COHORT, e))?;
        for (r, _) in intervals.iter_mut().zip(&folds_of).filter(|(_, &k)| k == f) {
            r.predicted = Some(predict_scores(&models, &r.performance));
        }
    }

    // groups from SLUMS
    let mut groups: BTreeMap<String, CognitiveGroup> = BTreeMap::new();
    for d in datasets {
        if let Some(s) = d.survey("slums") {
            let g = cfg.slums.group(s).map_err(|e| stage_error(st, &d.participant, e))?;
            groups.insert(d.participant.clone(), g);
        }
    }

    // unsupervised task score over standardised performance features
    let rows: Vec<Vec<f64>> = intervals.iter().map(|r| r.performance.clone()).collect();
    let scaler = Standardizer::fit(&rows).map_err(|e| stage_error(st, COHORT, e))?;
    let z: Vec<Vec<f64>> = rows.iter().map(|r| scaler.transform(r)).collect();
    let method = match cfg.task_score {
        TaskScoreKind::Principal => TaskScoreMethod::PrincipalDirection,
        TaskScoreKind::Discriminant => {
            let labels: Option<Vec<usize>> = intervals.iter().map(|r| groups.get(&r.participant).map(|g| g.index())).collect();
            match labels {
                Some(labels) => TaskScoreMethod::Discriminant { labels },
                None => {
                    log::warn!("some participants lack a SLUMS score; task score falls back to the principal direction");
                    TaskScoreMethod::PrincipalDirection
                }
            }
        }
    };
    let ts = unsupervised_task_score(&z, &method).map_err(|e| stage_error(st, COHORT, e))?;
    for (r, t) in intervals.iter_mut().zip(ts) {
        r.ts = t;
    }

    // participant records: interval means, missing physiology imputed by the cohort mean
    let base_names = interval_feature_names();
    let n_perf = performance_feature_names().len();
    let n_eda = EdaFeatures::NAMES.len();
    let n_hrv = HrvFeatures::NAMES.len();
    let mut per: Vec<Vec<Option<f64>>> = Vec::new();
    let mut scores: Vec<Option<[f64; 3]>> = Vec::new();
    for d in datasets {
        let mine: Vec<&IntervalRecord> = intervals.iter().filter(|r| r.participant == d.participant).collect();
        let mut v: Vec<Option<f64>> = Vec::with_capacity(base_names.len());
        let perf = mean_columns(&mine.iter().map(|r| r.performance.clone()).collect::<Vec<_>>());
        v.extend((0..n_perf).map(|j| perf.as_ref().map(|p| p[j])));
        let e = mean_columns(&mine.iter().filter_map(|r| r.eda.clone()).collect::<Vec<_>>());
        v.extend((0..n_eda).map(|j| e.as_ref().map(|p| p[j])));
        let h = mean_columns(&mine.iter().filter_map(|r| r.hrv.clone()).collect::<Vec<_>>());
        v.extend((0..n_hrv).map(|j| h.as_ref().map(|p| p[j])));
        let hr: Vec<Vec<f64>> = mine.iter().filter_map(|r| r.heart_rate_bpm.map(|x| vec![x])).collect();
        v.push(mean_columns(&hr).map(|x| x[0]));
        let ts: Vec<Vec<f64>> = mine.iter().map(|r| vec![r.ts]).collect();
        v.push(mean_columns(&ts).map(|x| x[0]));
        per.push(v);
        let pred: Vec<Vec<f64>> = mine.iter().filter_map(|r| r.predicted.map(|p| p.to_vec())).collect();
        scores.push(mean_columns(&pred).map(|p| [p[0], p[1], p[2]]));
    }
    let mut keep = Vec::new();
    for j in 0..base_names.len() {
        let vals: Vec<f64> = per.iter().filter_map(|v| v[j]).collect();
        if vals.is_empty() {
            log::warn!("feature {} unavailable for every participant; dropped", base_names[j]);
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        if vals.len() < per.len() {
            log::warn!("feature {} missing for {} participants; imputed", base_names[j], per.len() - vals.len());
        }
        for v in per.iter_mut() {
            v[j] = Some(v[j].unwrap_or(mean));
        }
        keep.push(j);
    }
    let mut feature_names: Vec<String> = keep.iter().map(|&j| base_names[j].clone()).collect();
    let with_scores = scores.iter().all(Option::is_some);
    if with_scores {
        feature_names.extend(["tc", "seq", "int"].map(String::from));
    }
    let participants: Vec<ParticipantSummary> = datasets
        .iter()
        .zip(&per)
        .zip(&scores)
        .map(|((d, v), s)| {
            let mut features: Vec<f64> = keep.iter().map(|&j| v[j].unwrap()).collect();
            if with_scores {
                features.extend(s.unwrap());
            }
            ParticipantSummary {
                participant: d.participant.clone(),
                group: groups.get(&d.participant).copied(),
                features,
                surveys: d.surveys.clone().unwrap_or_default(),
            }
        })
        .collect();

    // cognitive classification
    let records: Vec<AssessmentRecord> = participants
        .iter()
        .filter_map(|p| Some(AssessmentRecord { participant: p.participant.clone(), features: p.features.clone(), group: p.group? }))
        .collect();
    let distinct = records.iter().map(|r| r.group).collect::<std::collections::BTreeSet<_>>().len();
    let classification = if records.len() >= 6 && distinct >= 2 {
        Some(classify_cognitive_status(&records, &feature_names, &cfg.classifier).map_err(|e| stage_error(st, COHORT, e))?)
    } else {
        log::warn!("{} participants with SLUMS scores in {distinct} groups; classification skipped", records.len());
        None
    };

    let (pearson, partial) = correlations(&participants, &feature_names, cfg);
    Ok(AssessStage { intervals, feature_names, participants, classification, pearson, partial, supervised })
}

/// Feature-by-survey tables over participants holding every survey; the
/// partial table controls for `cfg.control`.
fn correlations(participants: &[ParticipantSummary], names: &[String], cfg: &PipelineConfig) -> (Option<CorrelationTable>, Option<CorrelationTable>) {
    let Some(first) = participants.first() else { return (None, None) };
    let surveys: Vec<String> = first
        .surveys
        .iter()
        .map(|(n, _)| n.clone())
        .filter(|n| *n != cfg.control && participants.iter().all(|p| p.surveys.iter().any(|(m, _)| m == n)))
        .collect();
    if surveys.is_empty() || participants.len() < 3 {
        return (None, None);
    }
    let value = |p: &ParticipantSummary, n: &str| p.surveys.iter().find(|(m, _)| m == n).map(|(_, v)| *v);
    let rows: Vec<(String, Vec<f64>)> =
        names.iter().enumerate().map(|(j, n)| (n.clone(), participants.iter().map(|p| p.features[j]).collect())).collect();
    let cols: Vec<(String, Vec<f64>)> =
        surveys.iter().map(|s| (s.clone(), participants.iter().map(|p| value(p, s).unwrap()).collect())).collect();
    let pearson = CorrelationTable::build(&rows, &cols, &[]);
    let control: Option<Vec<f64>> = participants.iter().map(|p| value(p, &cfg.control)).collect();
    let partial = control.filter(|_| participants.len() >= 4).map(|c| CorrelationTable::build(&rows, &cols, &[c]));
    (Some(pearson), partial)
}
