//! Artifact writers and the run summary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::formats::Diagnostic;
use super::stages::{
    ActivityStage, AssessStage, EdaResult, GestureStage, ParticipantActivities, ParticipantGestures, ParticipantPostures, PostureStage,
    PpgResult,
};
use crate::activity::{best_match, duration_error, write_intervals_csv, ACTIVITY_COUNT};
use crate::error::Result;
use crate::ppg::HrvFeatures;
use crate::signal::{TimeSeries, Window};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Runs `body` against a buffered file and flushes it.
fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut out = create(path)?;
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Concatenates CSV blocks that each start with the same header.
fn concat_csv(out: &mut impl Write, blocks: impl IntoIterator<Item = Vec<u8>>) -> Result<()> {
    for (k, block) in blocks.into_iter().enumerate() {
        let body = if k == 0 { &block[..] } else { &block[block.iter().position(|&b| b == b'\n').map_or(block.len(), |p| p + 1)..] };
        out.write_all(body)?;
    }
    Ok(())
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn write_diagnostics(path: &Path, diags: &[Diagnostic]) -> Result<()> {
    write_file(path, |out| {
        writeln!(out, "path,line,code,severity,message")?;
        for d in diags {
            let sev = if d.is_error() { "error" } else { "warning" };
            writeln!(out, "{},{},{},{sev},\"{}\"", d.path, d.line, d.code.as_str(), d.message.replace('"', "'"))?;
        }
        Ok(())
    })
}

/// Writes `t_s,<column>` rows of consecutive segments.
pub fn write_series(path: &Path, column: &str, segments: &[&TimeSeries]) -> Result<()> {
    write_file(path, |out| {
        writeln!(out, "t_s,{column}")?;
        for s in segments {
            for (i, v) in s.samples().iter().enumerate() {
                writeln!(out, "{:.6},{v:.9}", s.time_of(i))?;
            }
        }
        Ok(())
    })
}

pub fn write_eda(dir: &Path, r: &EdaResult) -> Result<()> {
    write_series(&dir.join("eda_denoised.csv"), "eda_us", &r.segments.iter().map(|d| &d.y).collect::<Vec<_>>())?;
    write_file(&dir.join("eda_decomposition.csv"), |out| {
        let blocks = r
            .segments
            .iter()
            .map(|d| {
                let mut b = Vec::new();
                d.write_csv(&mut b).map(|_| b)
            })
            .collect::<Result<Vec<_>>>()?;
        concat_csv(out, blocks)
    })
}

pub fn write_ppg(dir: &Path, r: &PpgResult, beats: &crate::ppg::BeatConfig) -> Result<()> {
    write_file(&dir.join("beats.csv"), |out| {
        let blocks = r
            .beats
            .iter()
            .map(|b| {
                let mut v = Vec::new();
                b.write_csv(&mut v).map(|_| v)
            })
            .collect::<Result<Vec<_>>>()?;
        concat_csv(out, blocks)
    })?;
    write_file(&dir.join("hrv.csv"), |out| {
        writeln!(out, "start_s,end_s,heart_rate_bpm,{}", HrvFeatures::NAMES.join(","))?;
        for (b, f) in r.beats.iter().zip(&r.filtered) {
            let Ok(w) = Window::new(f.t0(), f.t0() + f.duration_s()) else { continue };
            let hr = crate::ppg::heart_rate(b, &w).ok();
            match crate::ppg::hrv::hrv_features_with(b, &w, beats) {
                Ok(h) => writeln!(out, "{},{},{},{}", w.start_s, w.end_s, opt(hr), join(&h.to_vec()))?,
                Err(_) => writeln!(out, "{},{},{}{}", w.start_s, w.end_s, opt(hr), ",".repeat(HrvFeatures::NAMES.len()))?,
            }
        }
        Ok(())
    })
}

pub fn write_gestures(dir: &Path, g: &ParticipantGestures) -> Result<()> {
    write_file(&dir.join("gestures.csv"), |out| {
        writeln!(out, "start_s,end_s,gesture,score,gesture_truth,posture_truth")?;
        for w in &g.windows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                w.spec.start_s,
                w.spec.end_s,
                w.gesture,
                w.score,
                opt(w.gesture_truth),
                opt(w.posture_truth)
            )?;
        }
        Ok(())
    })
}

pub fn write_postures(dir: &Path, g: &ParticipantGestures, p: &ParticipantPostures) -> Result<()> {
    write_file(&dir.join("postures.csv"), |out| {
        writeln!(out, "start_s,end_s,posture,posture_truth")?;
        for (w, post) in g.windows.iter().zip(&p.postures) {
            if let Some(post) = post {
                writeln!(out, "{},{},{post},{}", w.spec.start_s, w.spec.end_s, opt(w.posture_truth))?;
            }
        }
        Ok(())
    })
}

pub fn write_activities(dir: &Path, a: &ParticipantActivities) -> Result<()> {
    write_file(&dir.join("context.csv"), |out| {
        writeln!(out, "slice,t_s,gesture,posture,ambient,object,activity,activity_truth")?;
        for (k, t) in a.tuples.iter().enumerate() {
            writeln!(
                out,
                "{k},{},{},{},{},{},{},{}",
                a.origin_s + k as f64,
                t.gesture,
                t.posture,
                opt(t.ambient),
                opt(t.object),
                a.decoded[k],
                opt(a.truth[k])
            )?;
        }
        Ok(())
    })?;
    let truth = (!a.truth_intervals.is_empty()).then_some(&a.truth_intervals[..]);
    write_file(&dir.join("activities.csv"), |out| write_intervals_csv(out, &a.intervals, truth))
}

pub fn write_assessment(out_dir: &Path, s: &AssessStage) -> Result<()> {
    write_file(&out_dir.join("features.csv"), |out| {
        let names = super::stages::interval_feature_names();
        writeln!(
            out,
            "participant,activity,start_s,end_s,{},tc_observed,seq_observed,int_observed,tc,seq,int",
            names.join(",")
        )?;
        for r in &s.intervals {
            let eda = r.eda.as_ref().map_or(",".repeat(crate::eda::EdaFeatures::NAMES.len() - 1), |v| join(v));
            let hrv = r.hrv.as_ref().map_or(",".repeat(HrvFeatures::NAMES.len() - 1), |v| join(v));
            let three = |v: Option<[f64; 3]>| v.map_or(",,".to_string(), |v| join(&v));
            writeln!(
                out,
                "{},{},{},{},{},{eda},{hrv},{},{},{},{}",
                r.participant,
                r.activity,
                r.start_s,
                r.end_s,
                join(&r.performance),
                opt(r.heart_rate_bpm),
                r.ts,
                three(r.observed),
                three(r.predicted)
            )?;
        }
        Ok(())
    })?;
    write_file(&out_dir.join("participant_features.csv"), |out| {
        writeln!(out, "participant,group,{}", s.feature_names.join(","))?;
        for p in &s.participants {
            writeln!(out, "{},{},{}", p.participant, p.group.map(|g| g.name()).unwrap_or_default(), join(&p.features))?;
        }
        Ok(())
    })?;
    if let Some(t) = &s.pearson {
        write_file(&out_dir.join("correlations_pearson.csv"), |out| t.write_csv(out))?;
    }
    if let Some(t) = &s.partial {
        write_file(&out_dir.join("correlations_partial.csv"), |out| t.write_csv(out))?;
    }
    if let Some(c) = &s.classification {
        write_json(&out_dir.join("classification.json"), c)?;
        write_file(&out_dir.join("confusion.csv"), |out| c.write_confusion_csv(out))?;
    }
    write_json(&out_dir.join("assessment.json"), s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityAccuracy {
    pub activity: usize,
    pub slices: usize,
    pub accuracy: Option<f64>,
    pub mean_duration_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantLine {
    pub participant: String,
    pub fold: usize,
    pub group: Option<String>,
    pub predicted_group: Option<String>,
    pub mean_duration_error: Option<f64>,
    pub decoded_intervals: usize,
}

/// Headline metrics of a run. Gesture and posture accuracies count windows
/// holding exactly one complete labelled gesture inside a labelled posture
/// span; activity accuracy counts labelled slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub participants: usize,
    pub gesture_windows: usize,
    pub gesture_accuracy: Option<f64>,
    pub posture_windows: usize,
    pub posture_accuracy: Option<f64>,
    pub activity_slices: usize,
    pub activity_accuracy: Option<f64>,
    pub truth_intervals: usize,
    pub mean_duration_error: Option<f64>,
    pub scored_intervals: usize,
    pub supervised_scores: bool,
    pub cognitive_accuracy: Option<f64>,
    pub cognitive_false_positive_rate: Option<f64>,
    pub selected_features: Vec<String>,
    pub per_activity: Vec<ActivityAccuracy>,
    pub per_participant: Vec<ParticipantLine>,
}

fn ratio(hit: usize, n: usize) -> Option<f64> {
    (n > 0).then(|| hit as f64 / n as f64)
}

impl Summary {
    pub fn compute(g: &GestureStage, p: &PostureStage, a: &ActivityStage, s: &AssessStage) -> Result<Self> {
        let (mut gn, mut gh, mut pn, mut ph) = (0, 0, 0, 0);
        for (pg, pp) in g.participants.iter().zip(&p.participants) {
            for (w, post) in pg.windows.iter().zip(&pp.postures) {
                let (Some(gt), Some(pt)) = (w.gesture_truth, w.posture_truth) else { continue };
                gn += 1;
                gh += usize::from(w.gesture == gt);
                if let Some(post) = post {
                    pn += 1;
                    ph += usize::from(*post == pt);
                }
            }
        }
        let mut slices = [(0usize, 0usize); ACTIVITY_COUNT];
        let mut errors: Vec<Vec<f64>> = vec![Vec::new(); ACTIVITY_COUNT];
        let mut per_participant = Vec::new();
        for pa in &a.participants {
            for (d, t) in pa.decoded.iter().zip(&pa.truth) {
                if let Some(t) = t {
                    slices[t - 1].0 += 1;
                    slices[t - 1].1 += usize::from(d == t);
                }
            }
            let mut mine = Vec::new();
            for t in &pa.truth_intervals {
                let e = match best_match(t, &pa.intervals) {
                    Some(m) => duration_error(m, t)?,
                    None => 1.0,
                };
                errors[t.label - 1].push(e);
                mine.push(e);
            }
            let rec = s.classification.as_ref().and_then(|c| c.records.iter().find(|r| r.participant == pa.participant));
            per_participant.push(ParticipantLine {
                participant: pa.participant.clone(),
                fold: pa.fold,
                group: s.participants.iter().find(|q| q.participant == pa.participant).and_then(|q| q.group).map(|g| g.name().to_string()),
                predicted_group: rec.map(|r| r.predicted.name().to_string()),
                mean_duration_error: (!mine.is_empty()).then(|| mine.iter().sum::<f64>() / mine.len() as f64),
                decoded_intervals: pa.intervals.len(),
            });
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let all_errors: Vec<f64> = errors.iter().flatten().copied().collect();
        let (sn, sh) = slices.iter().fold((0, 0), |acc, s| (acc.0 + s.0, acc.1 + s.1));
        Ok(Self {
            participants: g.participants.len(),
            gesture_windows: gn,
            gesture_accuracy: ratio(gh, gn),
            posture_windows: pn,
            posture_accuracy: ratio(ph, pn),
            activity_slices: sn,
            activity_accuracy: ratio(sh, sn),
            truth_intervals: all_errors.len(),
            mean_duration_error: mean(&all_errors),
            scored_intervals: s.intervals.len(),
            supervised_scores: s.supervised,
            cognitive_accuracy: s.classification.as_ref().map(|c| c.accuracy),
            cognitive_false_positive_rate: s.classification.as_ref().map(|c| c.false_positive_rate),
            selected_features: s.classification.as_ref().map(|c| c.selected.clone()).unwrap_or_default(),
            per_activity: (0..ACTIVITY_COUNT)
                .map(|k| ActivityAccuracy {
                    activity: k + 1,
                    slices: slices[k].0,
                    accuracy: ratio(slices[k].1, slices[k].0),
                    mean_duration_error: mean(&errors[k]),
                })
                .collect(),
            per_participant,
        })
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        write_json(&out_dir.join("report.json"), self)?;
        write_file(&out_dir.join("summary.csv"), |out| {
            writeln!(out, "metric,value")?;
            let rows: [(&str, String); 10] = [
                ("participants", self.participants.to_string()),
                ("gesture_accuracy", opt(self.gesture_accuracy)),
                ("posture_accuracy", opt(self.posture_accuracy)),
                ("activity_accuracy", opt(self.activity_accuracy)),
                ("mean_duration_error", opt(self.mean_duration_error)),
                ("scored_intervals", self.scored_intervals.to_string()),
                ("supervised_scores", self.supervised_scores.to_string()),
                ("cognitive_accuracy", opt(self.cognitive_accuracy)),
                ("cognitive_false_positive_rate", opt(self.cognitive_false_positive_rate)),
                ("selected_features", self.selected_features.join(" ")),
            ];
            for (k, v) in rows {
                writeln!(out, "{k},{v}")?;
            }
            Ok(())
        })?;
        write_file(&out_dir.join("activity_accuracy.csv"), |out| {
            writeln!(out, "activity,slices,accuracy,mean_duration_error")?;
            for r in &self.per_activity {
                writeln!(out, "{},{},{},{}", r.activity, r.slices, opt(r.accuracy), opt(r.mean_duration_error))?;
            }
            Ok(())
        })
    }
}
