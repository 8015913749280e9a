//! Full runs on a small synthetic cohort: determinism, cache resumption and
//! assessment of participants without labels.

use std::fs;
use std::path::Path;

use cogassess::pipeline::{run, synth, PipelineConfig, Stage, SynthSpec};

fn cohort(dir: &Path) -> Vec<cogassess::pipeline::ParticipantBundle> {
    let spec = SynthSpec { participants: 3, seed: 21, ..SynthSpec::default() };
    synth(&spec, dir).unwrap().0
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn repeated_runs_are_identical_and_resume_from_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let bundles = cohort(&tmp.path().join("data"));
    let cfg = PipelineConfig::default();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = run(&cfg, &bundles, &a).unwrap();
    let second = run(&cfg, &bundles, &b).unwrap();
    assert_eq!(first, second);
    let reference = tree(&a);
    assert_eq!(reference, tree(&b));
    for f in ["report.json", "summary.csv", "features.csv", "assessment.json", "diagnostics.csv"] {
        assert!(reference.iter().any(|(n, _)| n == f), "{f} missing");
    }
    for f in ["eda_decomposition.csv", "beats.csv", "hrv.csv", "gestures.csv", "postures.csv", "activities.csv"] {
        assert!(a.join("participants/p01").join(f).is_file(), "{f} missing");
    }
    assert!(first.summary.as_ref().unwrap().gesture_accuracy.unwrap() > 0.8);

    let again = run(&cfg, &bundles, &a).unwrap();
    assert!(again.computed.is_empty(), "{:?}", again.computed);

    fs::remove_file(a.join("cache/cohort/postures.json")).unwrap();
    fs::remove_file(a.join("cache/p02/eda.json")).unwrap();
    fs::remove_file(a.join("report.json")).unwrap();
    let resumed = run(&cfg, &bundles, &a).unwrap();
    assert_eq!(resumed.computed, vec![(Stage::Eda, "p02".to_string()), (Stage::Postures, "cohort".to_string())]);
    assert_eq!(tree(&a), reference);

    let forced = run(&PipelineConfig { stages: vec![Stage::Activities], force: true, ..cfg.clone() }, &bundles, &a).unwrap();
    assert_eq!(forced.computed, vec![(Stage::Activities, "cohort".to_string())]);
    assert_eq!(tree(&a), reference);
}

#[test]
fn assessment_without_labels_keeps_the_task_score() {
    let tmp = tempfile::tempdir().unwrap();
    let bundles = cohort(&tmp.path().join("data"));
    fs::remove_file(bundles[1].path("labels.csv")).unwrap();
    let out = tmp.path().join("out");
    let cfg = PipelineConfig { stages: vec![Stage::Assess, Stage::Report], ..PipelineConfig::default() };
    let outcome = run(&cfg, &bundles, &out).unwrap();
    let summary = outcome.summary.unwrap();
    assert!(!summary.supervised_scores);
    assert!(summary.scored_intervals > 0);

    let features = fs::read_to_string(out.join("features.csv")).unwrap();
    let mut lines = features.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let ts = header.iter().position(|h| *h == "ts").expect("ts column");
    let participant = header.iter().position(|h| *h == "participant").unwrap();
    let mut unlabelled = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert!(cells[ts].parse::<f64>().unwrap().is_finite());
        unlabelled += usize::from(cells[participant] == "p02");
    }
    assert!(unlabelled > 0);
    assert!(!out.join("participants").exists(), "unselected stages wrote artifacts");
}
