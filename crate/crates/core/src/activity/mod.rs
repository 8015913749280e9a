//! Complex activities of daily living: context tuples observed once per
//! second, a factorised hierarchical dynamic Bayesian network over them, and
//! the start/end duration error of recognised activity windows.

pub mod hdbn;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use hdbn::{em_train, viterbi_decode, EmConfig, EmFit, HdbnModel, LabeledSequence, ROW_TOLERANCE};

pub const ACTIVITY_COUNT: usize = 13;
pub const AMBIENT_ROOMS: usize = 3;
pub const OBJECT_SENSORS: usize = 7;
pub const SLICE_S: f64 = 1.0;

pub const LAYER_NAMES: [&str; 4] = ["gesture", "posture", "ambient", "object"];

/// One time slice of context: gesture and posture ids are 1-based, ambient
/// room and object ids are 1-based or absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextTuple {
    pub slice: usize,
    pub gesture: usize,
    pub posture: usize,
    pub ambient: Option<usize>,
    pub object: Option<usize>,
}

impl ContextTuple {
    /// Zero-based symbol per layer; absence maps to symbol 0 of the ambient
    /// and object layers.
    pub fn symbols(&self) -> [usize; 4] {
        [
            self.gesture.wrapping_sub(1),
            self.posture.wrapping_sub(1),
            self.ambient.unwrap_or(0),
            self.object.unwrap_or(0),
        ]
    }
}

/// Symbol counts of the four observation layers, "none" included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    pub sizes: [usize; 4],
}

impl Alphabet {
    pub fn new(postures: usize) -> Self {
        Self { sizes: [crate::acc::GESTURE_COUNT, postures, AMBIENT_ROOMS + 1, OBJECT_SENSORS + 1] }
    }

    pub fn custom(sizes: [usize; 4]) -> Result<Self> {
        if sizes[0] == 0 || sizes[1] == 0 || sizes[2] == 0 || sizes[3] == 0 {
            return Err(Error::invalid("every layer needs at least one symbol"));
        }
        Ok(Self { sizes })
    }

    /// Symbols of `tuple`, checked against the layer sizes; `index` is the
    /// position reported on failure.
    pub fn encode(&self, tuple: &ContextTuple, index: usize) -> Result<[usize; 4]> {
        let raw = [tuple.gesture, tuple.posture, tuple.ambient.unwrap_or(0), tuple.object.unwrap_or(0)];
        let sym = tuple.symbols();
        for l in 0..4 {
            let bad = if l < 2 { raw[l] == 0 || raw[l] > self.sizes[l] } else { raw[l] >= self.sizes[l] };
            if bad {
                return Err(Error::SymbolOutOfRange { slice: index, layer: LAYER_NAMES[l], value: raw[l], size: self.sizes[l] });
            }
        }
        Ok(sym)
    }
}

/// A binary ambient or object sensor transition. Sensor ids `1..=3` are
/// room occupancy sensors and `4..=10` object sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorEvent {
    pub timestamp_s: f64,
    pub sensor_id: usize,
    pub state: bool,
}

impl SensorEvent {
    pub fn room(&self) -> Option<usize> {
        (1..=AMBIENT_ROOMS).contains(&self.sensor_id).then_some(self.sensor_id)
    }

    pub fn object(&self) -> Option<usize> {
        (AMBIENT_ROOMS + 1..=AMBIENT_ROOMS + OBJECT_SENSORS).contains(&self.sensor_id).then(|| self.sensor_id - AMBIENT_ROOMS)
    }
}

pub const SENSOR_COUNT: usize = AMBIENT_ROOMS + OBJECT_SENSORS;

/// A labelled time window; labels are 1-based activity ids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityInterval {
    pub label: usize,
    pub start_s: f64,
    pub end_s: f64,
}

impl ActivityInterval {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn overlap_s(&self, other: &ActivityInterval) -> f64 {
        (self.end_s.min(other.end_s) - self.start_s.max(other.start_s)).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedSequence {
    /// 1-based activity per slice.
    pub labels: Vec<usize>,
    pub intervals: Vec<ActivityInterval>,
    pub log_probability: f64,
}

/// Runs of equal labels as intervals; slice `i` covers
/// `[slices[i], slices[i] + 1)` seconds.
pub fn intervals_from_labels(labels: &[usize], slices: &[usize]) -> Vec<ActivityInterval> {
    let mut out: Vec<ActivityInterval> = Vec::new();
    for (i, (&label, &slice)) in labels.iter().zip(slices).enumerate() {
        let start = slice as f64 * SLICE_S;
        match out.last_mut() {
            Some(last) if last.label == label && i > 0 && slices[i - 1] + 1 == slice => last.end_s = start + SLICE_S,
            _ => out.push(ActivityInterval { label, start_s: start, end_s: start + SLICE_S }),
        }
    }
    out
}

/// `(|start shift| + |end shift|) / truth duration`.
pub fn duration_error(pred: &ActivityInterval, truth: &ActivityInterval) -> Result<f64> {
    let d = truth.duration_s();
    if !(d > 0.0) {
        return Err(Error::invalid(format!("truth interval has non-positive duration {d}")));
    }
    Ok(((pred.start_s - truth.start_s).abs() + (pred.end_s - truth.end_s).abs()) / d)
}

/// Candidate with the same label and the largest overlap; the earliest wins
/// ties.
pub fn best_match<'a>(target: &ActivityInterval, candidates: &'a [ActivityInterval]) -> Option<&'a ActivityInterval> {
    candidates
        .iter()
        .filter(|c| c.label == target.label && c.overlap_s(target) > 0.0)
        .fold(None, |best: Option<&ActivityInterval>, c| match best {
            Some(b) if b.overlap_s(target) >= c.overlap_s(target) => Some(b),
            _ => Some(c),
        })
}

/// Mean duration error over the truth intervals; an activity with no
/// overlapping prediction of its label counts as 1.
pub fn mean_duration_error(pred: &[ActivityInterval], truth: &[ActivityInterval]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::invalid("no truth intervals"));
    }
    let mut sum = 0.0;
    for t in truth {
        sum += match best_match(t, pred) {
            Some(p) => duration_error(p, t)?,
            None => 1.0,
        };
    }
    Ok(sum / truth.len() as f64)
}

/// Writes `label,start_s,end_s,duration_error` rows; the error column is
/// empty without truth or without a matching truth interval.
pub fn write_intervals_csv<W: Write>(mut out: W, pred: &[ActivityInterval], truth: Option<&[ActivityInterval]>) -> Result<()> {
    writeln!(out, "label,start_s,end_s,duration_error")?;
    for p in pred {
        let err = truth.and_then(|ts| best_match(p, ts)).map(|t| duration_error(p, t)).transpose()?;
        match err {
            Some(e) => writeln!(out, "{},{},{},{}", p.label, p.start_s, p.end_s, e)?,
            None => writeln!(out, "{},{},{},", p.label, p.start_s, p.end_s)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(label: usize, a: f64, b: f64) -> ActivityInterval {
        ActivityInterval { label, start_s: a, end_s: b }
    }

    #[test]
    fn cooking_example() {
        let truth = iv(1, 605.0 * 60.0, 635.0 * 60.0);
        let pred = iv(1, 610.0 * 60.0, 639.0 * 60.0);
        assert!((duration_error(&pred, &truth).unwrap() - 0.30).abs() < 1e-12);
    }

    #[test]
    fn exact_and_shifted() {
        let truth = iv(2, 0.0, 600.0);
        assert_eq!(duration_error(&truth, &truth).unwrap(), 0.0);
        let shifted = iv(2, 60.0, 660.0);
        assert!((duration_error(&shifted, &truth).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_truth_rejected() {
        assert!(duration_error(&iv(1, 0.0, 1.0), &iv(1, 5.0, 5.0)).is_err());
        assert!(duration_error(&iv(1, 0.0, 1.0), &iv(1, 5.0, 4.0)).is_err());
    }

    #[test]
    fn runs_become_intervals() {
        let labels = [1, 1, 2, 2, 2, 1];
        let slices: Vec<usize> = (10..16).collect();
        let out = intervals_from_labels(&labels, &slices);
        assert_eq!(out, vec![iv(1, 10.0, 12.0), iv(2, 12.0, 15.0), iv(1, 15.0, 16.0)]);
        let gap = intervals_from_labels(&[3, 3], &[0, 5]);
        assert_eq!(gap.len(), 2);
    }

    #[test]
    fn symbols_validated() {
        let a = Alphabet::new(4);
        let ok = ContextTuple { slice: 0, gesture: 8, posture: 4, ambient: Some(3), object: None };
        assert_eq!(a.encode(&ok, 0).unwrap(), [7, 3, 3, 0]);
        let bad = ContextTuple { object: Some(8), ..ok };
        match a.encode(&bad, 17) {
            Err(Error::SymbolOutOfRange { slice, layer, .. }) => assert_eq!((slice, layer), (17, "object")),
            other => panic!("{other:?}"),
        }
        let zero = ContextTuple { gesture: 0, ..ok };
        assert!(a.encode(&zero, 0).is_err());
    }

    #[test]
    fn csv_has_error_column() {
        let truth = [iv(1, 0.0, 10.0)];
        let pred = [iv(1, 1.0, 11.0), iv(2, 11.0, 12.0)];
        let mut buf = Vec::new();
        write_intervals_csv(&mut buf, &pred, Some(&truth)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "label,start_s,end_s,duration_error\n1,1,11,0.2\n2,11,12,\n");
        assert!((mean_duration_error(&pred, &truth).unwrap() - 0.2).abs() < 1e-12);
    }
}
