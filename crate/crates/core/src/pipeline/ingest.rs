//! Loading and validating participant bundles.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::formats::{parse_events, parse_labels, parse_signal, parse_surveys, Code, Diagnostic, Label, RawSignal};
use crate::acc::AccStream;
use crate::activity::SensorEvent;
use crate::error::{Error, Result};
use crate::signal::TimeSeries;

pub const EDA_FILE: &str = "eda.csv";
pub const BVP_FILE: &str = "bvp.csv";
pub const ACC_FILE: &str = "acc.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const SURVEYS_FILE: &str = "surveys.csv";

/// Relative deviation of the median sample spacing from `1 / rate_hz`
/// tolerated before a file is rejected.
pub const RATE_TOLERANCE: f64 = 0.01;

/// One participant's directory of recordings.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParticipantBundle {
    pub id: String,
    pub dir: PathBuf,
}

impl ParticipantBundle {
    /// Bundle whose id is the directory name.
    pub fn in_dir(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let id = dir
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::invalid(format!("cannot take a participant id from {}", dir.display())))?
            .to_string();
        Ok(Self { id, dir })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    pub fn has_labels(&self) -> bool {
        self.path(LABELS_FILE).is_file()
    }
}

/// Every subdirectory of `root` as a bundle, sorted by id.
pub fn discover(root: &Path) -> Result<Vec<ParticipantBundle>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root)? {
        let path = entry?.path();
        if path.is_dir() {
            out.push(ParticipantBundle::in_dir(path)?);
        }
    }
    out.sort();
    Ok(out)
}

/// Validated recordings of one participant. Signals are split into
/// contiguous segments wherever two or more samples are missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub participant: String,
    pub eda: Vec<TimeSeries>,
    pub bvp: Vec<TimeSeries>,
    pub acc: Vec<AccStream>,
    pub events: Vec<SensorEvent>,
    pub labels: Option<Vec<Label>>,
    pub surveys: Option<Vec<(String, f64)>>,
}

impl Dataset {
    pub fn survey(&self, name: &str) -> Option<f64> {
        self.surveys.as_ref()?.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    /// `None` when any error diagnostic was raised.
    pub dataset: Option<Dataset>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Ingested {
    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| d.is_error())
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter().filter(|d| !d.is_error())
    }

    /// The dataset, or the first error as [`Error::Validation`].
    pub fn into_result(self) -> Result<Dataset> {
        match (self.dataset, self.diagnostics.into_iter().find(|d| d.is_error())) {
            (Some(d), None) => Ok(d),
            (_, Some(e)) => Err(Error::Validation { path: e.path, line: e.line, code: e.code.as_str(), message: e.message }),
            (None, None) => Err(Error::invalid("ingestion produced no dataset")),
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Places the rows of a parsed signal on the declared sample grid. One
/// missing sample is filled by linear interpolation; a longer gap starts a
/// new segment. Returns `(t0, rows)` per segment.
pub fn segment_signal(path: &str, raw: &RawSignal, diags: &mut Vec<Diagnostic>) -> Option<Vec<(f64, Vec<Vec<f64>>)>> {
    let dt = 1.0 / raw.rate_hz;
    let before = diags.iter().filter(|d| d.is_error()).count();
    if (raw.times[0] - raw.start_epoch_s).abs() > 0.5 * dt {
        diags.push(Diagnostic::new(
            path,
            raw.lines[0],
            Code::E002,
            format!("first sample at {} s but the header declares start {} s", raw.times[0], raw.start_epoch_s),
        ));
    }
    for i in 1..raw.times.len() {
        if !(raw.times[i] > raw.times[i - 1]) {
            diags.push(Diagnostic::new(
                path,
                raw.lines[i],
                Code::E006,
                format!("time {} s does not follow {} s", raw.times[i], raw.times[i - 1]),
            ));
        }
    }
    if diags.iter().filter(|d| d.is_error()).count() > before {
        return None;
    }
    let steps: Vec<f64> = raw.times.windows(2).map(|w| (w[1] - w[0]) * raw.rate_hz).collect();
    if !steps.is_empty() {
        let m = median(steps.clone());
        if (m - 1.0).abs() > RATE_TOLERANCE {
            diags.push(Diagnostic::new(
                path,
                1,
                Code::E005,
                format!("header declares {} Hz but samples are {:.6} s apart (median)", raw.rate_hz, m * dt),
            ));
            return None;
        }
    }
    for (i, s) in steps.iter().enumerate() {
        if (s - s.round()).abs() > 0.25 {
            diags.push(Diagnostic::new(
                path,
                raw.lines[i + 1],
                Code::E005,
                format!("sample at {} s is off the {} Hz grid", raw.times[i + 1], raw.rate_hz),
            ));
        }
    }
    if diags.iter().filter(|d| d.is_error()).count() > before {
        return None;
    }

    let mut segments: Vec<(f64, Vec<Vec<f64>>)> = vec![(raw.start_epoch_s, vec![raw.rows[0].clone()])];
    for (i, s) in steps.iter().enumerate() {
        let k = s.round() as usize;
        let row = &raw.rows[i + 1];
        let line = raw.lines[i + 1];
        let seg = segments.last_mut().unwrap();
        match k {
            1 => seg.1.push(row.clone()),
            2 => {
                let prev = seg.1.last().unwrap().clone();
                seg.1.push(prev.iter().zip(row).map(|(a, b)| 0.5 * (a + b)).collect());
                seg.1.push(row.clone());
                diags.push(Diagnostic::new(path, line, Code::W101, format!("one sample missing before {} s; interpolated", raw.times[i + 1])));
            }
            _ => {
                let t0 = seg.0 + seg.1.len() as f64 * dt + (k - 1) as f64 * dt;
                diags.push(Diagnostic::new(
                    path,
                    line,
                    Code::W102,
                    format!("{} samples missing before {} s; signal split", k - 1, raw.times[i + 1]),
                ));
                segments.push((t0, vec![row.clone()]));
            }
        }
    }
    Some(segments)
}

fn read(path: &Path, name: &str, required: bool, diags: &mut Vec<Diagnostic>) -> Option<String> {
    match fs::read_to_string(path) {
        Ok(s) => Some(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound && !required => None,
        Err(e) => {
            diags.push(Diagnostic::new(name, 0, Code::E001, format!("cannot read {}: {e}", path.display())));
            None
        }
    }
}

fn scalar_segments(name: &str, text: &str, diags: &mut Vec<Diagnostic>) -> Option<Vec<TimeSeries>> {
    let raw = parse_signal(name, text, 1, diags)?;
    let rate = raw.rate_hz;
    let segs = segment_signal(name, &raw, diags)?;
    segs.into_iter()
        .map(|(t0, rows)| TimeSeries::new(rows.into_iter().map(|r| r[0]).collect(), rate, t0))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| diags.push(Diagnostic::new(name, 0, Code::E003, e.to_string())))
        .ok()
}

/// Reads one single-channel signal file into gap-free segments, with the
/// warnings raised on the way. The first error becomes [`Error::Validation`].
pub fn read_scalar_signal(path: &Path) -> Result<(Vec<TimeSeries>, Vec<Diagnostic>)> {
    let mut diags = Vec::new();
    let name = path.display().to_string();
    let segs = read(path, &name, true, &mut diags).and_then(|t| scalar_segments(&name, &t, &mut diags));
    let result = Ingested { dataset: None, diagnostics: diags };
    if let Some(e) = result.errors().next() {
        return Err(Error::Validation { path: e.path.clone(), line: e.line, code: e.code.as_str(), message: e.message.clone() });
    }
    match segs {
        Some(s) if !s.is_empty() => Ok((s, result.diagnostics)),
        _ => Err(Error::invalid(format!("{name} holds no samples"))),
    }
}

fn acc_segments(name: &str, text: &str, diags: &mut Vec<Diagnostic>) -> Option<Vec<AccStream>> {
    let raw = parse_signal(name, text, 3, diags)?;
    let rate = raw.rate_hz;
    let segs = segment_signal(name, &raw, diags)?;
    segs.into_iter()
        .map(|(t0, rows)| {
            let s: Vec<[f64; 3]> = rows.iter().map(|r| [r[0], r[1], r[2]]).collect();
            AccStream::from_samples(&s, rate, t0)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| diags.push(Diagnostic::new(name, 0, Code::E003, e.to_string())))
        .ok()
}

/// Reads and validates every file of `bundle`. The three wearable streams
/// are required; events, labels and surveys are optional.
pub fn ingest(bundle: &ParticipantBundle) -> Ingested {
    let mut diags = Vec::new();
    let name = |f: &str| format!("{}/{f}", bundle.id);
    let load = |file: &str, required: bool, diags: &mut Vec<Diagnostic>| read(&bundle.path(file), &name(file), required, diags);

    let eda = load(EDA_FILE, true, &mut diags).and_then(|t| scalar_segments(&name(EDA_FILE), &t, &mut diags));
    let bvp = load(BVP_FILE, true, &mut diags).and_then(|t| scalar_segments(&name(BVP_FILE), &t, &mut diags));
    let acc = load(ACC_FILE, true, &mut diags).and_then(|t| acc_segments(&name(ACC_FILE), &t, &mut diags));
    let events = match load(EVENTS_FILE, false, &mut diags) {
        Some(t) => parse_events(&name(EVENTS_FILE), &t, &mut diags),
        None => Vec::new(),
    };
    let labels = load(LABELS_FILE, false, &mut diags).map(|t| parse_labels(&name(LABELS_FILE), &t, &mut diags));
    let surveys = load(SURVEYS_FILE, false, &mut diags).map(|t| parse_surveys(&name(SURVEYS_FILE), &t, &mut diags));

    let dataset = match (eda, bvp, acc) {
        (Some(eda), Some(bvp), Some(acc)) if !diags.iter().any(|d| d.is_error()) => {
            Some(Dataset { participant: bundle.id.clone(), eda, bvp, acc, events, labels, surveys })
        }
        _ => None,
    };
    Ingested { dataset, diagnostics: diags }
}
