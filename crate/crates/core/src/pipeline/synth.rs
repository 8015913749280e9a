//! Synthetic participant cohorts with planted ground truth.
//!
//! Each participant performs a short gesture calibration followed by a
//! scripted session of complex activities in a three-room home. Wearable
//! streams, sensor events, labels and survey scores are written as a
//! regular bundle, and `manifest.json` records every planted quantity.

use std::f64::consts::PI;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::{Rotation3, Vector3};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::formats::{write_events, write_labels, write_signal, write_surveys, Label, LabelKind};
use super::ingest::{ParticipantBundle, ACC_FILE, BVP_FILE, EDA_FILE, EVENTS_FILE, LABELS_FILE, SURVEYS_FILE};
use crate::acc::deconv::convolve;
use crate::acc::{Posture, GESTURE_COUNT};
use crate::activity::{SensorEvent, ACTIVITY_COUNT, AMBIENT_ROOMS};
use crate::assessment::CognitiveGroup;
use crate::error::{Error, Result};

pub const EDA_RATE_HZ: f64 = 4.0;
pub const BVP_RATE_HZ: f64 = 64.0;
pub const ACC_RATE_HZ: f64 = 32.0;
/// Samples per accelerometer window (2 s).
pub const ACC_WINDOW: usize = 64;
/// Samples per gesture instance.
pub const KERNEL_LEN: usize = 24;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Room, object sub-tasks, posture and gesture repertoire of one activity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivityScript {
    pub room: usize,
    pub objects: &'static [usize],
    pub posture: Posture,
    pub gestures: &'static [usize],
}

/// Scripts of activities `1..=13`. Rooms are 1 kitchen, 2 living room,
/// 3 bedroom.
pub const ACTIVITY_SCRIPTS: [ActivityScript; ACTIVITY_COUNT] = [
    ActivityScript { room: 1, objects: &[1, 2, 1], posture: Posture::Standing, gestures: &[1, 2] },
    ActivityScript { room: 1, objects: &[3, 2], posture: Posture::Walking, gestures: &[3, 4] },
    ActivityScript { room: 1, objects: &[4], posture: Posture::Sitting, gestures: &[5, 6] },
    ActivityScript { room: 1, objects: &[3, 1, 3], posture: Posture::Standing, gestures: &[7, 8] },
    ActivityScript { room: 1, objects: &[4, 2], posture: Posture::Sitting, gestures: &[1, 3] },
    ActivityScript { room: 2, objects: &[5], posture: Posture::Sitting, gestures: &[2, 5] },
    ActivityScript { room: 2, objects: &[6], posture: Posture::Lying, gestures: &[6, 7] },
    ActivityScript { room: 2, objects: &[5, 6], posture: Posture::Walking, gestures: &[8, 1] },
    ActivityScript { room: 2, objects: &[7, 5], posture: Posture::Standing, gestures: &[4, 6] },
    ActivityScript { room: 3, objects: &[7], posture: Posture::Lying, gestures: &[3, 8] },
    ActivityScript { room: 3, objects: &[7, 6], posture: Posture::Standing, gestures: &[2, 6] },
    ActivityScript { room: 3, objects: &[4, 7], posture: Posture::Sitting, gestures: &[4, 7] },
    ActivityScript { room: 3, objects: &[6], posture: Posture::Walking, gestures: &[5, 1] },
];

/// Physiological and behavioural parameters of one cognitive group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupEffect {
    pub heart_rate_bpm: f64,
    /// Between-participant spread of the mean heart rate.
    pub heart_rate_sd_bpm: f64,
    pub rr_sd_ms: f64,
    pub scr_per_min: f64,
    /// Inclusive SLUMS range.
    pub slums: [u32; 2],
    /// Mean omitted sub-tasks per activity.
    pub omissions: f64,
    /// Mean wrong-object detours per activity.
    pub detours: f64,
    /// Mean repeated sub-tasks per activity.
    pub repeats: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantRhythm {
    /// 0-based participant index.
    pub participant: usize,
    pub bpm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub participants: usize,
    pub seed: u64,
    /// Indexed by [`CognitiveGroup::index`]; participant `i` belongs to group `i % 3`.
    pub groups: [GroupEffect; 3],
    pub min_activities: usize,
    pub max_activities: usize,
    /// Inclusive range of activity lengths; rounded to even seconds.
    pub min_activity_s: u32,
    pub max_activity_s: u32,
    /// Isolated instances of each gesture performed before the session.
    pub calibration_repeats: usize,
    /// Draw postures of walking activities from the six-class set.
    pub extended_postures: bool,
    pub acc_noise_g: f64,
    pub acc_amplitude_jitter: f64,
    /// Posture impulse amplitude relative to the gesture impulse.
    pub acc_secondary: f64,
    /// Amplitude of the slow orientation drift added to every axis.
    pub acc_drift_g: f64,
    pub eda_noise_us: f64,
    /// Steep-rise artifacts per session.
    pub eda_artifacts: usize,
    pub bvp_noise: f64,
    /// Motion-artifact bursts per session.
    pub bvp_artifacts: usize,
    pub constant_rhythm: Option<ConstantRhythm>,
    pub start_epoch_s: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let g = |hr, rr, scr, slums, o, d, r| GroupEffect {
            heart_rate_bpm: hr,
            heart_rate_sd_bpm: 1.0,
            rr_sd_ms: rr,
            scr_per_min: scr,
            slums,
            omissions: o,
            detours: d,
            repeats: r,
        };
        Self {
            participants: 15,
            seed: 7,
            groups: [
                g(70.0, 50.0, 2.0, [27, 30], 0.1, 0.1, 0.2),
                g(75.0, 35.0, 3.0, [21, 26], 0.5, 0.4, 0.6),
                g(80.0, 20.0, 4.5, [12, 20], 1.0, 0.8, 1.2),
            ],
            min_activities: 6,
            max_activities: 8,
            min_activity_s: 40,
            max_activity_s: 80,
            calibration_repeats: 3,
            extended_postures: false,
            acc_noise_g: 0.003,
            acc_amplitude_jitter: 0.02,
            acc_secondary: 0.15,
            acc_drift_g: 0.05,
            eda_noise_us: 0.003,
            eda_artifacts: 2,
            bvp_noise: 0.02,
            bvp_artifacts: 1,
            constant_rhythm: None,
            start_epoch_s: 1_700_000_000.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("synthetic cohort: {m}")));
        if self.participants == 0 {
            return bad("need at least one participant");
        }
        if self.min_activities == 0 || self.min_activities > self.max_activities || self.max_activities > ACTIVITY_COUNT {
            return bad("activity count range must lie in 1..=13");
        }
        if self.min_activity_s < 8 || self.min_activity_s > self.max_activity_s {
            return bad("activity length range must start at 8 s or more");
        }
        if self.calibration_repeats == 0 {
            return bad("every gesture needs a calibration instance");
        }
        for v in [self.acc_noise_g, self.acc_amplitude_jitter, self.acc_secondary, self.acc_drift_g, self.eda_noise_us, self.bvp_noise] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("noise levels must be finite and non-negative");
            }
        }
        for g in &self.groups {
            if !(g.heart_rate_bpm > 30.0 && g.heart_rate_bpm < 200.0) || g.slums[0] > g.slums[1] {
                return bad("group heart rate or SLUMS range out of bounds");
            }
            if [g.heart_rate_sd_bpm, g.rr_sd_ms, g.scr_per_min, g.omissions, g.detours, g.repeats].iter().any(|v| !(*v >= 0.0)) {
                return bad("group rates must be non-negative");
            }
        }
        if let Some(c) = self.constant_rhythm {
            if c.participant >= self.participants || !(c.bpm >= 30.0 && c.bpm <= 200.0) {
                return bad("constant-rhythm participant out of range");
            }
        }
        if !self.start_epoch_s.is_finite() {
            return bad("start epoch must be finite");
        }
        Ok(())
    }
}

pub fn participant_id(index: usize) -> String {
    format!("p{:02}", index + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedActivity {
    pub activity: usize,
    pub room: usize,
    pub posture: Posture,
    pub start_s: f64,
    pub end_s: f64,
    /// Observed task-completeness points (omitted sub-tasks).
    pub tc: usize,
    /// Observed sequencing points (wrong-object detours).
    pub seq: usize,
    /// Observed interruption points (repeated sub-tasks).
    pub int: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedParticipant {
    pub id: String,
    pub group: CognitiveGroup,
    pub slums: f64,
    pub age: f64,
    pub session_start_s: f64,
    pub session_end_s: f64,
    pub calibration_end_s: f64,
    pub mean_heart_rate_bpm: f64,
    pub rr_sd_ms: f64,
    pub beats: usize,
    pub scr_onsets_s: Vec<f64>,
    pub eda_artifacts_s: Vec<f64>,
    pub bvp_artifacts_s: Vec<f64>,
    pub activities: Vec<PlantedActivity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SynthSpec,
    pub participants: Vec<PlantedParticipant>,
}

struct Generated {
    planted: PlantedParticipant,
    eda: Vec<Vec<f64>>,
    bvp: Vec<Vec<f64>>,
    acc: Vec<Vec<f64>>,
    events: Vec<SensorEvent>,
    labels: Vec<Label>,
    surveys: Vec<(String, f64)>,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn planar(g: usize, t: f64) -> [f64; 2] {
    let w = 2.0 * PI * t;
    match g {
        1 => [w.cos() - 1.0, w.sin()],
        2 => [w.sin(), 0.5 * (2.0 * w).sin()],
        3 => [1.5 * (w.cos() - 1.0), 0.4 * w.sin()],
        4 => [((3.0 * w).sin()).asin() * 0.7, 0.3 * w.sin()],
        5 => [0.4 * w.sin(), 1.2 * (2.0 * w).sin()],
        6 => [t * (2.0 * w).cos(), t * (2.0 * w).sin()],
        7 => [(2.0 * t - 1.0) * (1.0 - (2.0 * t - 1.0).powi(2)) * 2.0, 0.6 * (3.0 * w).sin()],
        _ => [w.cos().powi(3) - 1.0, w.sin().powi(3)],
    }
}

const GESTURE_SHAPE: [[f64; 2]; GESTURE_COUNT] = [[2.357, 1.0], [1.535, 1.0], [0.642, 1.0], [0.555, 1.0], [0.320, 1.0], [6.099, 1.0], [2.167, 1.0], [3.887, 1.0]];

/// Per-axis acceleration of gesture `g` (1..=8): a planar curve in a
/// gesture-specific tilted plane, tapered to rest at both ends. The hand
/// starts and ends at rest in the same place, so each component has zero
/// integral and zero first moment.
pub fn gesture_kernel(g: usize) -> [Vec<f64>; 3] {
    let [gain, aspect] = GESTURE_SHAPE[g - 1];
    shaped_kernel(g, gain, aspect)
}

/// Kernel of gesture `g` with its in-plane curve scaled by `gain` and its
/// second component further scaled by `aspect`.
pub fn shaped_kernel(g: usize, gain: f64, aspect: f64) -> [Vec<f64>; 3] {
    let tilt = Rotation3::from_euler_angles(0.3 * g as f64, -0.2 * g as f64, 0.15 * g as f64);
    let mid = (KERNEL_LEN as f64 - 1.0) / 2.0;
    let taper: Vec<f64> = (0..KERNEL_LEN).map(|i| (PI * (i as f64 + 0.5) / KERNEL_LEN as f64).sin()).collect();
    let basis: [Vec<f64>; 2] = [taper.clone(), taper.iter().enumerate().map(|(i, w)| w * (i as f64 - mid)).collect()];
    let moment = |v: &[f64], k: i32| v.iter().enumerate().map(|(i, x)| x * (i as f64 - mid).powi(k)).sum::<f64>();
    let m = nalgebra::Matrix2::from_fn(|r, c| moment(&basis[c], r as i32));
    let inv = m.try_inverse().expect("moment matrix of the taper is regular");
    let mut plane: Vec<[f64; 2]> =
        (0..KERNEL_LEN)
            .map(|i| {
                let [a, b] = planar(g, i as f64 / KERNEL_LEN as f64);
                [gain * a * taper[i], gain * aspect * b * taper[i]]
            })
            .collect();
    for k in 0..2 {
        let comp: Vec<f64> = plane.iter().map(|p| p[k]).collect();
        let c = inv * nalgebra::Vector2::new(moment(&comp, 0), moment(&comp, 1));
        for (i, p) in plane.iter_mut().enumerate() {
            p[k] -= c[0] * basis[0][i] + c[1] * basis[1][i];
        }
    }
    let pts: Vec<Vector3<f64>> = plane.iter().map(|&[a, b]| tilt * Vector3::new(a, b, 0.0)).collect();
    std::array::from_fn(|k| pts.iter().map(|p| p[k]).collect())
}

/// Secondary impulse period (samples), amplitude, alternate-impulse factor,
/// doublet factor and per-axis gains of each posture.
fn posture_signature(p: Posture) -> (usize, f64, f64, f64, [f64; 3]) {
    match p {
        Posture::Walking => (16, 1.0, 1.0, 0.0, [1.0, 1.0, 1.0]),
        Posture::WalkingWithWalker => (26, 1.0, 1.0, 0.75, [1.0, 0.3, 1.0]),
        Posture::WalkingWithStick => (20, 1.0, 0.3, 0.0, [1.0, 1.0, 0.3]),
        Posture::Sitting => (32, 0.6, 1.0, 0.0, [1.0, 0.0, 0.0]),
        Posture::Standing => (32, 0.6, 1.0, 0.0, [0.0, 1.0, 0.0]),
        Posture::Lying => (32, 0.6, 1.0, 0.0, [0.0, 0.0, 1.0]),
    }
}

/// One 2 s window holding a gesture instance starting at sample `offset`
/// and, when `posture` is given, that posture's impulse train.
fn acc_window(spec: &SynthSpec, rng: &mut ChaCha8Rng, gesture: usize, posture: Option<Posture>, offset: usize) -> [Vec<f64>; 3] {
    let jitter = |rng: &mut ChaCha8Rng| 1.0 + spec.acc_amplitude_jitter * gauss(rng);
    let mut impulses = [vec![0.0; ACC_WINDOW], vec![0.0; ACC_WINDOW], vec![0.0; ACC_WINDOW]];
    if let Some(p) = posture {
        let (period, amp, alt, doublet, gains) = posture_signature(p);
        let amp = amp * spec.acc_secondary;
        let mut secondary = vec![0.0; ACC_WINDOW];
        let mut i = rng.random_range(0..period);
        let mut k = 0;
        while i < ACC_WINDOW {
            let a = if k % 2 == 1 { amp * alt } else { amp };
            secondary[i] += a * jitter(rng);
            if doublet > 0.0 && i + 3 < ACC_WINDOW {
                secondary[i + 3] += a * doublet * jitter(rng);
            }
            i += period;
            k += 1;
        }
        for a in 0..3 {
            impulses[a] = secondary.iter().map(|v| v * gains[a]).collect();
        }
    }
    let main = jitter(rng);
    for imp in impulses.iter_mut() {
        imp[offset] += main;
    }
    let h = gesture_kernel(gesture);
    std::array::from_fn(|a| convolve(&h[a], &impulses[a]).into_iter().map(|v| v + spec.acc_noise_g * gauss(rng)).collect())
}

/// Bateman-shaped response normalised to unit peak.
fn scr_shape(t: f64) -> f64 {
    const TAU0: f64 = 2.0;
    const TAU1: f64 = 0.7;
    let tp = TAU0 * TAU1 / (TAU0 - TAU1) * (TAU0 / TAU1).ln();
    let peak = (-tp / TAU0).exp() - (-tp / TAU1).exp();
    if t < 0.0 {
        0.0
    } else {
        ((-t / TAU0).exp() - (-t / TAU1).exp()) / peak
    }
}

fn pulse_shape(t: f64) -> f64 {
    (-(t / 0.09).powi(2)).exp() + 0.35 * (-((t - 0.28) / 0.1).powi(2)).exp()
}

fn plan_session(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<(usize, u32)> {
    let n = rng.random_range(spec.min_activities..=spec.max_activities);
    let mut out: Vec<(usize, u32)> = Vec::with_capacity(n);
    let mut used = [false; ACTIVITY_COUNT];
    while out.len() < n {
        let prev_room = out.last().map(|(a, _)| ACTIVITY_SCRIPTS[*a - 1].room);
        let choices: Vec<usize> = (1..=ACTIVITY_COUNT)
            .filter(|&a| !used[a - 1] && Some(ACTIVITY_SCRIPTS[a - 1].room) != prev_room)
            .collect();
        let Some(&a) = choices.choose(rng) else { break };
        used[a - 1] = true;
        let half = rng.random_range(spec.min_activity_s.div_ceil(2)..=spec.max_activity_s / 2);
        out.push((a, 2 * half));
    }
    out
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
}

/// Object touches of one activity: each sub-task is a burst of 2-3
/// activations, shaped by the planted errors.
fn activity_events(
    rng: &mut ChaCha8Rng,
    script: &ActivityScript,
    effect: &GroupEffect,
    start: f64,
    end: f64,
) -> (Vec<SensorEvent>, [usize; 3]) {
    let mut tasks: Vec<usize> = script.objects.to_vec();
    let omissions = poisson(rng, effect.omissions).min(tasks.len());
    for _ in 0..omissions {
        let k = rng.random_range(0..tasks.len());
        tasks.remove(k);
    }
    let detours = poisson(rng, effect.detours);
    for _ in 0..detours {
        let others: Vec<usize> = (1..=7).filter(|o| !script.objects.contains(o)).collect();
        let o = *others.choose(rng).unwrap();
        let k = rng.random_range(0..=tasks.len());
        tasks.insert(k, o);
    }
    let repeats = poisson(rng, effect.repeats);
    for _ in 0..repeats {
        if tasks.is_empty() {
            break;
        }
        let k = rng.random_range(0..tasks.len());
        tasks.insert(k + 1, tasks[k]);
    }
    let mut events = Vec::new();
    if !tasks.is_empty() {
        let span = (end - start) - 4.0;
        let slot = span / tasks.len() as f64;
        for (j, &o) in tasks.iter().enumerate() {
            let mut t = start + 2.0 + j as f64 * slot + rng.random_range(0.0..0.25 * slot);
            let touches = rng.random_range(2..=3);
            for _ in 0..touches {
                if t + 0.6 >= end - 1.0 {
                    break;
                }
                let sensor = AMBIENT_ROOMS + o;
                events.push(SensorEvent { timestamp_s: round6(t), sensor_id: sensor, state: true });
                events.push(SensorEvent { timestamp_s: round6(t + 0.5), sensor_id: sensor, state: false });
                t += rng.random_range(1.0..2.5);
            }
        }
    }
    (events, [omissions, detours, repeats])
}

fn generate(spec: &SynthSpec, index: usize) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let group = CognitiveGroup::from_index(index % 3).unwrap();
    let effect = spec.groups[group.index()];
    let id = participant_id(index);
    let t0 = spec.start_epoch_s + 86_400.0 * index as f64;

    let plan = plan_session(spec, &mut rng);
    let calib_s = 2.0 * (GESTURE_COUNT * spec.calibration_repeats) as f64;
    let mut activities = Vec::new();
    let mut events = Vec::new();
    let mut labels = Vec::new();
    let mut t = t0 + calib_s;
    for &(a, len) in &plan {
        let script = &ACTIVITY_SCRIPTS[a - 1];
        let (start, end) = (t, t + len as f64);
        let posture = match (script.posture, spec.extended_postures) {
            (Posture::Walking, true) => *[Posture::Walking, Posture::WalkingWithWalker, Posture::WalkingWithStick].choose(&mut rng).unwrap(),
            (p, _) => p,
        };
        events.push(SensorEvent { timestamp_s: round6(start + rng.random_range(0.0..0.4)), sensor_id: script.room, state: true });
        let (obj, [tc, seq, int]) = activity_events(&mut rng, script, &effect, start, end);
        events.extend(obj);
        events.push(SensorEvent { timestamp_s: round6(end - rng.random_range(0.05..0.4)), sensor_id: script.room, state: false });
        activities.push(PlantedActivity { activity: a, room: script.room, posture, start_s: start, end_s: end, tc, seq, int });
        labels.push(Label { kind: LabelKind::Activity, id: a, start_s: start, end_s: end, value: 0.0 });
        labels.push(Label { kind: LabelKind::Posture, id: posture.id(), start_s: start, end_s: end, value: 0.0 });
        for (kind, v) in [(LabelKind::Tc, tc), (LabelKind::Seq, seq), (LabelKind::Int, int)] {
            labels.push(Label { kind, id: a, start_s: start, end_s: end, value: v as f64 });
        }
        t = end;
    }
    let t_end = t + 4.0;
    events.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));

    // accelerometer: calibration windows then one gesture instance per window
    let n_windows = ((t_end - t0) / 2.0).round() as usize;
    let drift_phase: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
    let mut acc: Vec<Vec<f64>> = Vec::with_capacity(n_windows * ACC_WINDOW);
    for w in 0..n_windows {
        let ws = t0 + 2.0 * w as f64;
        let calib = w < GESTURE_COUNT * spec.calibration_repeats;
        let current = activities.iter().find(|p| p.start_s <= ws && ws < p.end_s);
        let samples: [Vec<f64>; 3] = match (calib, current) {
            (true, _) => {
                let g = 1 + w / spec.calibration_repeats;
                let offset = rng.random_range(0..=ACC_WINDOW - KERNEL_LEN);
                let s = acc_window(spec, &mut rng, g, None, offset);
                let span = (ws + offset as f64 / ACC_RATE_HZ, ws + (offset + KERNEL_LEN) as f64 / ACC_RATE_HZ);
                labels.push(Label { kind: LabelKind::Gesture, id: g, start_s: span.0, end_s: span.1, value: 0.0 });
                s
            }
            (false, Some(p)) => {
                let g = *ACTIVITY_SCRIPTS[p.activity - 1].gestures.choose(&mut rng).unwrap();
                let offset = rng.random_range(0..=ACC_WINDOW - KERNEL_LEN);
                let s = acc_window(spec, &mut rng, g, Some(p.posture), offset);
                let span = (ws + offset as f64 / ACC_RATE_HZ, ws + (offset + KERNEL_LEN) as f64 / ACC_RATE_HZ);
                labels.push(Label { kind: LabelKind::Gesture, id: g, start_s: span.0, end_s: span.1, value: 0.0 });
                s
            }
            (false, None) => std::array::from_fn(|_| (0..ACC_WINDOW).map(|_| spec.acc_noise_g * gauss(&mut rng)).collect()),
        };
        for i in 0..ACC_WINDOW {
            let ts = (ws - t0) + i as f64 / ACC_RATE_HZ;
            acc.push(
                (0..3)
                    .map(|a| round6(samples[a][i] + spec.acc_drift_g * (2.0 * PI * 0.02 * ts + drift_phase[a]).sin()))
                    .collect(),
            );
        }
    }
    labels.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.kind.cmp(&b.kind)));

    // skin conductance
    let duration = t_end - t0;
    let n_eda = (duration * EDA_RATE_HZ).round() as usize;
    let base = rng.random_range(1.5..4.0);
    let waves: Vec<(f64, f64, f64)> =
        (0..3).map(|_| (rng.random_range(0.05..0.3), rng.random_range(120.0..400.0), rng.random_range(0.0..2.0 * PI))).collect();
    let mut scr_onsets = Vec::new();
    let mut s = rng.random_range(0.0..60.0 / effect.scr_per_min.max(1e-6));
    while s < duration - 10.0 && effect.scr_per_min > 0.0 {
        scr_onsets.push((s, rng.random_range(0.1..0.5)));
        s += -(1.0 - rng.random::<f64>()).ln() * 60.0 / effect.scr_per_min;
    }
    let eda_artifacts: Vec<f64> = (0..spec.eda_artifacts).map(|_| rng.random_range(10.0..duration - 10.0)).collect();
    let eda: Vec<Vec<f64>> = (0..n_eda)
        .map(|i| {
            let ts = i as f64 / EDA_RATE_HZ;
            let tonic = base + waves.iter().map(|(a, p, ph)| a * (2.0 * PI * ts / p + ph).sin()).sum::<f64>();
            let phasic: f64 = scr_onsets.iter().map(|(o, amp)| amp * scr_shape(ts - o)).sum();
            let artifact: f64 = eda_artifacts.iter().map(|a| if (ts - a).abs() < 0.3 { 1.5 } else { 0.0 }).sum();
            vec![round6(tonic + phasic + artifact + spec.eda_noise_us * gauss(&mut rng))]
        })
        .collect();

    // pulse
    let constant = spec.constant_rhythm.filter(|c| c.participant == index);
    let mean_hr = match constant {
        Some(c) => c.bpm,
        None => effect.heart_rate_bpm + effect.heart_rate_sd_bpm * gauss(&mut rng),
    };
    let mean_rr = 60_000.0 / mean_hr;
    let rr_sd = if constant.is_some() { 0.0 } else { effect.rr_sd_ms };
    let mut beats = Vec::new();
    let mut tb = rng.random_range(0.2..0.8);
    let mut z = gauss(&mut rng);
    while tb < duration - 0.5 {
        beats.push(tb);
        z = 0.5 * z + (1.0f64 - 0.25).sqrt() * gauss(&mut rng);
        tb += (mean_rr + rr_sd * z).clamp(350.0, 1800.0) / 1000.0;
    }
    let bvp_artifacts: Vec<f64> = if constant.is_some() {
        Vec::new()
    } else {
        (0..spec.bvp_artifacts).map(|_| rng.random_range(10.0..duration - 10.0)).collect()
    };
    let n_bvp = (duration * BVP_RATE_HZ).round() as usize;
    let resp = rng.random_range(0.2..0.3);
    let mut next = 0;
    let bvp: Vec<Vec<f64>> = (0..n_bvp)
        .map(|i| {
            let ts = i as f64 / BVP_RATE_HZ;
            while next < beats.len() && beats[next] < ts - 1.0 {
                next += 1;
            }
            let pulse: f64 = beats[next..].iter().take_while(|&&b| b < ts + 1.0).map(|b| pulse_shape(ts - b)).sum();
            let wander = 0.1 * (2.0 * PI * resp * ts).sin();
            let artifact = if bvp_artifacts.iter().any(|a| (ts - a).abs() < 1.5) { 0.3 * gauss(&mut rng) } else { 0.0 };
            vec![round6(pulse * (1.0 + 0.05 * (2.0 * PI * resp * ts).cos()) + wander + artifact + spec.bvp_noise * gauss(&mut rng))]
        })
        .collect();

    // surveys
    let g = group.index() as f64;
    let slums = rng.random_range(effect.slums[0]..=effect.slums[1]) as f64;
    let age = rng.random_range(65..=90) as f64;
    let clip = |v: f64, lo: f64, hi: f64| v.round().clamp(lo, hi);
    let surveys = vec![
        ("slums".to_string(), slums),
        ("zung".to_string(), clip(35.0 + 10.0 * g + 5.0 * gauss(&mut rng), 20.0, 80.0)),
        ("iadl".to_string(), clip(8.0 - 2.0 * g + gauss(&mut rng), 0.0, 8.0)),
        ("ypas".to_string(), clip(60.0 - 10.0 * g + 8.0 * gauss(&mut rng), 0.0, 137.0)),
        ("barthel".to_string(), clip(100.0 - 5.0 * g - 3.0 * gauss(&mut rng).abs(), 0.0, 100.0)),
        ("gds".to_string(), clip(2.0 + 2.0 * g + 1.5 * gauss(&mut rng), 0.0, 15.0)),
        ("age".to_string(), age),
    ];

    let planted = PlantedParticipant {
        id,
        group,
        slums,
        age,
        session_start_s: t0,
        session_end_s: t_end,
        calibration_end_s: t0 + calib_s,
        mean_heart_rate_bpm: mean_hr,
        rr_sd_ms: rr_sd,
        beats: beats.len(),
        scr_onsets_s: scr_onsets.iter().map(|(o, _)| t0 + o).collect(),
        eda_artifacts_s: eda_artifacts.iter().map(|a| t0 + a).collect(),
        bvp_artifacts_s: bvp_artifacts.iter().map(|a| t0 + a).collect(),
        activities,
    };
    Generated { planted, eda, bvp, acc, events, labels, surveys }
}

/// Writes one bundle directory per participant plus `manifest.json` under
/// `out`, and returns the bundles and manifest.
pub fn synth(spec: &SynthSpec, out: &Path) -> Result<(Vec<ParticipantBundle>, Manifest)> {
    spec.validate()?;
    fs::create_dir_all(out)?;
    let mut bundles = Vec::new();
    let mut planted = Vec::new();
    for i in 0..spec.participants {
        let g = generate(spec, i);
        let dir = out.join(&g.planted.id);
        fs::create_dir_all(&dir)?;
        let t0 = g.planted.session_start_s;
        let file = |name: &str| -> Result<BufWriter<fs::File>> { Ok(BufWriter::new(fs::File::create(dir.join(name))?)) };
        write_signal(file(EDA_FILE)?, t0, EDA_RATE_HZ, &g.eda)?;
        write_signal(file(BVP_FILE)?, t0, BVP_RATE_HZ, &g.bvp)?;
        write_signal(file(ACC_FILE)?, t0, ACC_RATE_HZ, &g.acc)?;
        write_events(file(EVENTS_FILE)?, &g.events)?;
        write_labels(file(LABELS_FILE)?, &g.labels)?;
        write_surveys(file(SURVEYS_FILE)?, &g.surveys)?;
        bundles.push(ParticipantBundle { id: g.planted.id.clone(), dir });
        planted.push(g.planted);
    }
    let manifest = Manifest { spec: spec.clone(), participants: planted };
    fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok((bundles, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripts_are_distinct_within_rooms() {
        for a in 0..ACTIVITY_COUNT {
            for b in a + 1..ACTIVITY_COUNT {
                let (x, y) = (&ACTIVITY_SCRIPTS[a], &ACTIVITY_SCRIPTS[b]);
                if x.room == y.room {
                    assert!(x.posture != y.posture || x.gestures != y.gestures, "{} vs {}", a + 1, b + 1);
                }
            }
        }
    }

    #[test]
    fn sessions_alternate_rooms() {
        let spec = SynthSpec::default();
        for i in 0..6 {
            let g = generate(&spec, i);
            let acts = &g.planted.activities;
            assert!((spec.min_activities..=spec.max_activities).contains(&acts.len()));
            for w in acts.windows(2) {
                assert_ne!(w[0].room, w[1].room);
                assert_eq!(w[0].end_s, w[1].start_s);
            }
            let dur = g.planted.session_end_s - g.planted.session_start_s;
            assert_eq!(g.acc.len(), (dur * ACC_RATE_HZ).round() as usize);
            assert_eq!(g.eda.len(), (dur * EDA_RATE_HZ).round() as usize);
        }
    }

    #[test]
    fn scr_shape_peaks_at_one() {
        let m = (0..2000).map(|i| scr_shape(i as f64 * 0.005)).fold(0.0, f64::max);
        assert!((m - 1.0).abs() < 1e-4);
    }
}
