//! On-disk formats of a participant bundle.
//!
//! Signal files start with `# start_epoch_s=<float> rate_hz=<float>` and
//! hold one sample per line as `t_s,value` (`t_s,x,y,z` for acceleration).
//! `events.csv` rows are `timestamp_s,sensor_id,state`; `labels.csv` rows are
//! `kind,id,start_s,end_s,value`; `surveys.csv` rows are `name,value`. The
//! three table files may start with their column header.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::activity::{SensorEvent, SENSOR_COUNT};
use crate::error::Result;

pub const EVENTS_HEADER: &str = "timestamp_s,sensor_id,state";
pub const LABELS_HEADER: &str = "kind,id,start_s,end_s,value";
pub const SURVEYS_HEADER: &str = "name,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

/// Diagnostic codes, one per class of file problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Code {
    /// Required file missing or unreadable.
    E001,
    /// Missing or malformed signal header, or first sample off the declared start.
    E002,
    /// Row that does not parse (column count or number syntax).
    E003,
    /// NaN or infinite value.
    E004,
    /// Sample spacing disagrees with the declared rate.
    E005,
    /// Timestamps not strictly increasing.
    E006,
    /// Value outside its domain (sensor id, state, label kind, survey name).
    E007,
    /// Unknown configuration key or invalid value.
    E008,
    /// Single missing sample, filled by linear interpolation.
    W101,
    /// Gap of two or more samples; the signal is split there.
    W102,
}

impl Code {
    pub fn severity(self) -> Severity {
        match self {
            Code::W101 | Code::W102 => Severity::Warning,
            _ => Severity::Error,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Code::E001 => "E001",
            Code::E002 => "E002",
            Code::E003 => "E003",
            Code::E004 => "E004",
            Code::E005 => "E005",
            Code::E006 => "E006",
            Code::E007 => "E007",
            Code::E008 => "E008",
            Code::W101 => "W101",
            Code::W102 => "W102",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    /// 1-based; 0 when the problem concerns the whole file.
    pub line: usize,
    pub code: Code,
    pub message: String,
}

impl Diagnostic {
    pub fn new(path: &str, line: usize, code: Code, message: impl Into<String>) -> Self {
        Self { path: path.to_string(), line, code, message: message.into() }
    }

    pub fn is_error(&self) -> bool {
        self.code.severity() == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = if self.is_error() { "error" } else { "warning" };
        write!(f, "{}:{}: {level}[{}] {}", self.path, self.line, self.code.as_str(), self.message)
    }
}

/// Parsed signal file before gap handling.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSignal {
    pub start_epoch_s: f64,
    pub rate_hz: f64,
    pub times: Vec<f64>,
    /// One row per sample, `channels` values each.
    pub rows: Vec<Vec<f64>>,
    /// Source line of each row.
    pub lines: Vec<usize>,
}

fn parse_header(line: &str) -> Option<(f64, f64)> {
    let body = line.trim().strip_prefix('#')?;
    let mut start = None;
    let mut rate = None;
    for part in body.split_whitespace() {
        let (k, v) = part.split_once('=')?;
        match k {
            "start_epoch_s" => start = v.parse::<f64>().ok(),
            "rate_hz" => rate = v.parse::<f64>().ok(),
            _ => {}
        }
    }
    Some((start?, rate?))
}

fn parse_fields(line: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(format!("expected {n} columns, found {}", parts.len()));
    }
    parts.iter().map(|p| p.parse::<f64>().map_err(|_| format!("`{p}` is not a number"))).collect()
}

/// Parses a signal file with `channels` value columns after the timestamp.
/// Per-line problems are collected; the result is `None` when any error
/// was found.
pub fn parse_signal(path: &str, text: &str, channels: usize, diags: &mut Vec<Diagnostic>) -> Option<RawSignal> {
    let mut lines = text.lines().enumerate();
    let Some((_, first)) = lines.next() else {
        diags.push(Diagnostic::new(path, 1, Code::E002, "empty file; expected `# start_epoch_s=<s> rate_hz=<hz>`"));
        return None;
    };
    let Some((start_epoch_s, rate_hz)) = parse_header(first) else {
        diags.push(Diagnostic::new(path, 1, Code::E002, "malformed header; expected `# start_epoch_s=<s> rate_hz=<hz>`"));
        return None;
    };
    if !(rate_hz > 0.0 && rate_hz.is_finite() && start_epoch_s.is_finite()) {
        diags.push(Diagnostic::new(path, 1, Code::E002, "header rate must be positive and start finite"));
        return None;
    }
    let before = diags.iter().filter(|d| d.is_error()).count();
    let mut raw = RawSignal { start_epoch_s, rate_hz, times: Vec::new(), rows: Vec::new(), lines: Vec::new() };
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_fields(line, channels + 1) {
            Err(msg) => diags.push(Diagnostic::new(path, lineno, Code::E003, msg)),
            Ok(v) if v.iter().any(|x| !x.is_finite()) => diags.push(Diagnostic::new(path, lineno, Code::E004, "non-finite value")),
            Ok(v) => {
                raw.times.push(v[0]);
                raw.rows.push(v[1..].to_vec());
                raw.lines.push(lineno);
            }
        }
    }
    if diags.iter().filter(|d| d.is_error()).count() > before {
        return None;
    }
    if raw.rows.is_empty() {
        diags.push(Diagnostic::new(path, 0, Code::E003, "no samples"));
        return None;
    }
    Some(raw)
}

/// Writes a signal file; `rows[i]` holds the channel values of sample `i`.
pub fn write_signal<W: Write>(mut out: W, start_epoch_s: f64, rate_hz: f64, rows: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "# start_epoch_s={start_epoch_s} rate_hz={rate_hz}")?;
    for (i, r) in rows.iter().enumerate() {
        write!(out, "{}", start_epoch_s + i as f64 / rate_hz)?;
        for v in r {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn table_rows<'a>(text: &'a str, header: &str) -> impl Iterator<Item = (usize, &'a str)> + 'a {
    let header = header.to_string();
    text.lines()
        .enumerate()
        .filter(move |(i, l)| !l.trim().is_empty() && !(*i == 0 && l.trim() == header))
        .map(|(i, l)| (i + 1, l))
}

pub fn parse_events(path: &str, text: &str, diags: &mut Vec<Diagnostic>) -> Vec<SensorEvent> {
    let mut out: Vec<SensorEvent> = Vec::new();
    for (lineno, line) in table_rows(text, EVENTS_HEADER) {
        let v = match parse_fields(line, 3) {
            Ok(v) => v,
            Err(msg) => {
                diags.push(Diagnostic::new(path, lineno, Code::E003, msg));
                continue;
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            diags.push(Diagnostic::new(path, lineno, Code::E004, "non-finite value"));
            continue;
        }
        let id_ok = v[1].fract() == 0.0 && v[1] >= 1.0 && v[1] <= SENSOR_COUNT as f64;
        if !id_ok {
            diags.push(Diagnostic::new(path, lineno, Code::E007, format!("sensor id {} outside 1..={SENSOR_COUNT}", v[1])));
            continue;
        }
        if v[2] != 0.0 && v[2] != 1.0 {
            diags.push(Diagnostic::new(path, lineno, Code::E007, format!("state {} is not 0 or 1", v[2])));
            continue;
        }
        if let Some(prev) = out.last() {
            if v[0] < prev.timestamp_s {
                diags.push(Diagnostic::new(path, lineno, Code::E006, "event timestamps go backwards"));
                continue;
            }
        }
        out.push(SensorEvent { timestamp_s: v[0], sensor_id: v[1] as usize, state: v[2] == 1.0 });
    }
    out
}

pub fn write_events<W: Write>(mut out: W, events: &[SensorEvent]) -> Result<()> {
    writeln!(out, "{EVENTS_HEADER}")?;
    for e in events {
        writeln!(out, "{},{},{}", e.timestamp_s, e.sensor_id, e.state as u8)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// Complex activity interval.
    Activity,
    /// Span of one gesture instance.
    Gesture,
    /// Span held in one posture.
    Posture,
    /// Observed task-completeness points of one activity.
    Tc,
    /// Observed sequencing points.
    Seq,
    /// Observed interruption points.
    Int,
}

impl LabelKind {
    pub const ALL: [LabelKind; 6] = [LabelKind::Activity, LabelKind::Gesture, LabelKind::Posture, LabelKind::Tc, LabelKind::Seq, LabelKind::Int];

    pub fn name(self) -> &'static str {
        ["activity", "gesture", "posture", "tc", "seq", "int"][self as usize]
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s.trim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub kind: LabelKind,
    pub id: usize,
    pub start_s: f64,
    pub end_s: f64,
    /// Score points for tc/seq/int rows, 0 otherwise.
    pub value: f64,
}

pub fn parse_labels(path: &str, text: &str, diags: &mut Vec<Diagnostic>) -> Vec<Label> {
    let mut out = Vec::new();
    for (lineno, line) in table_rows(text, LABELS_HEADER) {
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 5 {
            diags.push(Diagnostic::new(path, lineno, Code::E003, format!("expected 5 columns, found {}", parts.len())));
            continue;
        }
        let Some(kind) = LabelKind::from_name(parts[0]) else {
            diags.push(Diagnostic::new(path, lineno, Code::E007, format!("unknown label kind `{}`", parts[0])));
            continue;
        };
        let nums = match parse_fields(&parts[1..].join(","), 4) {
            Ok(v) => v,
            Err(msg) => {
                diags.push(Diagnostic::new(path, lineno, Code::E003, msg));
                continue;
            }
        };
        if nums.iter().any(|x| !x.is_finite()) {
            diags.push(Diagnostic::new(path, lineno, Code::E004, "non-finite value"));
            continue;
        }
        if nums[0].fract() != 0.0 || nums[0] < 1.0 || !(nums[2] > nums[1]) {
            diags.push(Diagnostic::new(path, lineno, Code::E007, "id must be a positive integer and end after start"));
            continue;
        }
        out.push(Label { kind, id: nums[0] as usize, start_s: nums[1], end_s: nums[2], value: nums[3] });
    }
    out
}

pub fn write_labels<W: Write>(mut out: W, labels: &[Label]) -> Result<()> {
    writeln!(out, "{LABELS_HEADER}")?;
    for l in labels {
        writeln!(out, "{},{},{},{},{}", l.kind.name(), l.id, l.start_s, l.end_s, l.value)?;
    }
    Ok(())
}

pub fn parse_surveys(path: &str, text: &str, diags: &mut Vec<Diagnostic>) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for (lineno, line) in table_rows(text, SURVEYS_HEADER) {
        let Some((name, value)) = line.split_once(',') else {
            diags.push(Diagnostic::new(path, lineno, Code::E003, "expected `name,value`"));
            continue;
        };
        let name = name.trim();
        if name.is_empty() || out.iter().any(|(n, _)| n == name) {
            diags.push(Diagnostic::new(path, lineno, Code::E007, format!("empty or repeated survey name `{name}`")));
            continue;
        }
        match value.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => out.push((name.to_string(), v)),
            Ok(_) => diags.push(Diagnostic::new(path, lineno, Code::E004, "non-finite value")),
            Err(_) => diags.push(Diagnostic::new(path, lineno, Code::E003, format!("`{}` is not a number", value.trim()))),
        }
    }
    out
}

pub fn write_surveys<W: Write>(mut out: W, surveys: &[(String, f64)]) -> Result<()> {
    writeln!(out, "{SURVEYS_HEADER}")?;
    for (n, v) in surveys {
        writeln!(out, "{n},{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_round_trip() {
        let mut buf = Vec::new();
        write_signal(&mut buf, 100.0, 4.0, &[vec![1.5], vec![2.0], vec![2.5]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# start_epoch_s=100 rate_hz=4\n100,1.5\n100.25,2\n"));
        let mut d = Vec::new();
        let raw = parse_signal("eda.csv", &text, 1, &mut d).unwrap();
        assert!(d.is_empty());
        assert_eq!(raw.rows, vec![vec![1.5], vec![2.0], vec![2.5]]);
        assert_eq!(raw.lines, vec![2, 3, 4]);
    }

    #[test]
    fn signal_errors_have_lines() {
        let mut d = Vec::new();
        assert!(parse_signal("x", "start=1\n", 1, &mut d).is_none());
        assert_eq!(d[0].code, Code::E002);
        d.clear();
        assert!(parse_signal("x", "# start_epoch_s=0 rate_hz=4\n0,1\n0.25,abc\n0.5,NaN\n", 1, &mut d).is_none());
        assert_eq!(d.iter().map(|x| (x.line, x.code)).collect::<Vec<_>>(), vec![(3, Code::E003), (4, Code::E004)]);
    }

    #[test]
    fn events_validated() {
        let mut d = Vec::new();
        let ev = parse_events("e", "timestamp_s,sensor_id,state\n1,3,1\n2,11,1\n3,4,2\n0.5,4,0\n", &mut d);
        assert_eq!(ev.len(), 1);
        assert_eq!(d.iter().map(|x| x.code).collect::<Vec<_>>(), vec![Code::E007, Code::E007, Code::E006]);
    }

    #[test]
    fn labels_and_surveys() {
        let mut d = Vec::new();
        let mut buf = Vec::new();
        let l = Label { kind: LabelKind::Tc, id: 3, start_s: 10.0, end_s: 70.0, value: 2.0 };
        write_labels(&mut buf, &[l]).unwrap();
        assert_eq!(parse_labels("l", &String::from_utf8(buf).unwrap(), &mut d), vec![l]);
        let s = parse_surveys("s", "name,value\nslums,27\nslums,28\ngds,x\n", &mut d);
        assert_eq!(s, vec![("slums".to_string(), 27.0)]);
        assert_eq!(d.iter().map(|x| x.code).collect::<Vec<_>>(), vec![Code::E007, Code::E003]);
    }
}
