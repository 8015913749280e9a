//! Cognitive group classification with greedy forward feature selection,
//! evaluated by leaving out every pair of participants in turn.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Standardizer;
use crate::acc::{smo_train, Kernel, SvmModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CognitiveGroup {
    Nci,
    Mci,
    Ci,
}

impl CognitiveGroup {
    pub const ALL: [CognitiveGroup; 3] = [CognitiveGroup::Nci, CognitiveGroup::Mci, CognitiveGroup::Ci];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        ["NCI", "MCI", "CI"][self.index()]
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name().eq_ignore_ascii_case(s.trim()))
    }
}

/// SLUMS cut-offs: scores at or above `nci_min` are NCI, at or above
/// `mci_min` MCI, the rest CI; scores must lie in `[0, max_score]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlumsBanding {
    pub mci_min: f64,
    pub nci_min: f64,
    pub max_score: f64,
}

impl Default for SlumsBanding {
    fn default() -> Self {
        Self { mci_min: 21.0, nci_min: 27.0, max_score: 30.0 }
    }
}

impl SlumsBanding {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.mci_min && self.mci_min < self.nci_min && self.nci_min <= self.max_score) {
            return Err(Error::invalid("SLUMS cut-offs must satisfy 0 < mci_min < nci_min <= max_score"));
        }
        Ok(())
    }

    pub fn group(&self, score: f64) -> Result<CognitiveGroup> {
        self.validate()?;
        if !(0.0..=self.max_score).contains(&score) {
            return Err(Error::invalid(format!("SLUMS score {score} outside [0, {}]", self.max_score)));
        }
        Ok(if score >= self.nci_min {
            CognitiveGroup::Nci
        } else if score >= self.mci_min {
            CognitiveGroup::Mci
        } else {
            CognitiveGroup::Ci
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub participant: String,
    pub features: Vec<f64>,
    pub group: CognitiveGroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub max_features: usize,
    pub c: f64,
    pub kernel: Kernel,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { max_features: 3, c: 1.0, kernel: Kernel::Linear }
    }
}

/// Every unordered pair of participant indices, in lexicographic order.
pub fn ltpo_folds(participants: usize) -> Vec<(usize, usize)> {
    (0..participants).flat_map(|a| (a + 1..participants).map(move |b| (a, b))).collect()
}

/// Classifier restricted to a feature subset; a single training class
/// yields a constant prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetClassifier {
    pub features: Vec<usize>,
    pub scaler: Standardizer,
    pub svm: Option<SvmModel>,
    pub fallback: usize,
}

fn pick(x: &[f64], cols: &[usize]) -> Vec<f64> {
    cols.iter().map(|&c| x[c]).collect()
}

impl SubsetClassifier {
    pub fn train(xs: &[&[f64]], labels: &[usize], cols: &[usize], cfg: &ClassifierConfig) -> Result<Self> {
        let sub: Vec<Vec<f64>> = xs.iter().map(|x| pick(x, cols)).collect();
        let scaler = Standardizer::fit(&sub)?;
        let z: Vec<Vec<f64>> = sub.iter().map(|x| scaler.transform(x)).collect();
        let mut counts = BTreeMap::new();
        for &l in labels {
            *counts.entry(l).or_insert(0usize) += 1;
        }
        let fallback = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(l, _)| *l).unwrap_or(0);
        let svm = if counts.len() > 1 { Some(smo_train(&z, labels, cfg.c, cfg.kernel)?) } else { None };
        Ok(Self { features: cols.to_vec(), scaler, svm, fallback })
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        match &self.svm {
            Some(m) => m.predict(&self.scaler.transform(&pick(x, &self.features))),
            None => self.fallback,
        }
    }
}

/// Leave-one-participant-out accuracy of `cols` on the given records.
fn inner_accuracy(xs: &[&[f64]], labels: &[usize], owners: &[usize], cols: &[usize], cfg: &ClassifierConfig) -> Result<f64> {
    let mut people: Vec<usize> = owners.to_vec();
    people.sort_unstable();
    people.dedup();
    let mut correct = 0usize;
    for &p in &people {
        let train: Vec<usize> = (0..xs.len()).filter(|&i| owners[i] != p).collect();
        let tx: Vec<&[f64]> = train.iter().map(|&i| xs[i]).collect();
        let ty: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let model = SubsetClassifier::train(&tx, &ty, cols, cfg)?;
        correct += (0..xs.len()).filter(|&i| owners[i] == p && model.predict(xs[i]) == labels[i]).count();
    }
    Ok(correct as f64 / xs.len() as f64)
}

/// Greedy selection of up to `cfg.max_features` columns. The best single
/// column is always taken; later columns only when they strictly raise the
/// inner accuracy. Returns the columns and the accuracy after each step.
pub fn forward_select(
    xs: &[&[f64]],
    labels: &[usize],
    owners: &[usize],
    cfg: &ClassifierConfig,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let d = xs.first().map_or(0, |x| x.len());
    if d == 0 {
        return Err(Error::invalid("records carry no features"));
    }
    let mut chosen: Vec<usize> = Vec::new();
    let mut history: Vec<f64> = Vec::new();
    while chosen.len() < cfg.max_features.min(d) {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..d).filter(|c| !chosen.contains(c)) {
            let mut cols = chosen.clone();
            cols.push(c);
            let acc = inner_accuracy(xs, labels, owners, &cols, cfg)?;
            if best.is_none_or(|(_, b)| acc > b) {
                best = Some((c, acc));
            }
        }
        let Some((c, acc)) = best else { break };
        if history.last().is_some_and(|&prev| acc <= prev) {
            break;
        }
        chosen.push(c);
        history.push(acc);
    }
    Ok((chosen, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPrediction {
    pub participant: String,
    pub truth: CognitiveGroup,
    /// Majority over the folds holding the record out; ties go to the
    /// milder group.
    pub predicted: CognitiveGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CognitiveReport {
    pub feature_names: Vec<String>,
    /// Selection on the full cohort.
    pub selected: Vec<String>,
    pub folds: usize,
    /// Fraction of held-out predictions that are correct, over all folds.
    pub accuracy: f64,
    /// Mean one-vs-rest false positive rate over the groups present.
    pub false_positive_rate: f64,
    /// `confusion[truth][predicted]`, counted over all held-out predictions.
    pub confusion: [[usize; 3]; 3],
    pub records: Vec<RecordPrediction>,
}

impl CognitiveReport {
    /// Writes `truth,NCI,MCI,CI` rows.
    pub fn write_confusion_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "truth,NCI,MCI,CI")?;
        for g in CognitiveGroup::ALL {
            let row = self.confusion[g.index()];
            writeln!(out, "{},{},{},{}", g.name(), row[0], row[1], row[2])?;
        }
        Ok(())
    }
}

fn false_positive_rate(confusion: &[[usize; 3]; 3]) -> f64 {
    let total: usize = confusion.iter().flatten().sum();
    let mut rates = Vec::new();
    for g in 0..3 {
        let positives: usize = confusion[g].iter().sum();
        let negatives = total - positives;
        if positives == 0 || negatives == 0 {
            continue;
        }
        let fp: usize = (0..3).filter(|&t| t != g).map(|t| confusion[t][g]).sum();
        rates.push(fp as f64 / negatives as f64);
    }
    if rates.is_empty() {
        0.0
    } else {
        rates.iter().sum::<f64>() / rates.len() as f64
    }
}

/// Nested evaluation: for each held-out pair, features are selected and the
/// classifier trained on the remaining participants only.
pub fn classify_cognitive_status(records: &[AssessmentRecord], feature_names: &[String], cfg: &ClassifierConfig) -> Result<CognitiveReport> {
    let mut people: Vec<&str> = records.iter().map(|r| r.participant.as_str()).collect();
    people.sort_unstable();
    people.dedup();
    if people.len() < 6 {
        return Err(Error::TooShort { needed: 6, got: people.len() });
    }
    let d = feature_names.len();
    if records.iter().any(|r| r.features.len() != d || r.features.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("every record needs one finite value per feature name"));
    }
    let groups: std::collections::BTreeSet<_> = records.iter().map(|r| r.group).collect();
    if groups.len() < 2 {
        return Err(Error::invalid("classification needs at least two cognitive groups"));
    }
    let xs: Vec<&[f64]> = records.iter().map(|r| r.features.as_slice()).collect();
    let labels: Vec<usize> = records.iter().map(|r| r.group.index()).collect();
    let owners: Vec<usize> = records.iter().map(|r| people.binary_search(&r.participant.as_str()).unwrap()).collect();

    let folds = ltpo_folds(people.len());
    let mut confusion = [[0usize; 3]; 3];
    let mut votes = vec![[0usize; 3]; records.len()];
    for &(a, b) in &folds {
        let train: Vec<usize> = (0..records.len()).filter(|&i| owners[i] != a && owners[i] != b).collect();
        let tx: Vec<&[f64]> = train.iter().map(|&i| xs[i]).collect();
        let ty: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let to: Vec<usize> = train.iter().map(|&i| owners[i]).collect();
        let (cols, _) = forward_select(&tx, &ty, &to, cfg)?;
        let model = SubsetClassifier::train(&tx, &ty, &cols, cfg)?;
        for i in (0..records.len()).filter(|&i| owners[i] == a || owners[i] == b) {
            let p = model.predict(xs[i]);
            confusion[labels[i]][p] += 1;
            votes[i][p] += 1;
        }
    }
    let held: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..3).map(|g| confusion[g][g]).sum();
    let (selected, _) = forward_select(&xs, &labels, &owners, cfg)?;
    let records_out = records
        .iter()
        .zip(&votes)
        .map(|(r, v)| {
            let best = (0..3).fold(0, |m, g| if v[g] > v[m] { g } else { m });
            RecordPrediction { participant: r.participant.clone(), truth: r.group, predicted: CognitiveGroup::from_index(best).unwrap() }
        })
        .collect();
    Ok(CognitiveReport {
        feature_names: feature_names.to_vec(),
        selected: selected.iter().map(|&c| feature_names[c].clone()).collect(),
        folds: folds.len(),
        accuracy: correct as f64 / held as f64,
        false_positive_rate: false_positive_rate(&confusion),
        confusion,
        records: records_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_enumeration() {
        assert_eq!(ltpo_folds(2), vec![(0, 1)]);
        assert_eq!(ltpo_folds(5).len(), 10);
        let folds = ltpo_folds(7);
        for p in 0..7 {
            assert_eq!(folds.iter().filter(|(a, b)| *a == p || *b == p).count(), 6);
        }
    }

    #[test]
    fn banding() {
        let b = SlumsBanding::default();
        assert_eq!(b.group(28.0).unwrap(), CognitiveGroup::Nci);
        assert_eq!(b.group(21.0).unwrap(), CognitiveGroup::Mci);
        assert_eq!(b.group(12.0).unwrap(), CognitiveGroup::Ci);
        assert!(b.group(31.0).is_err());
        assert!(SlumsBanding { mci_min: 25.0, nci_min: 20.0, max_score: 30.0 }.validate().is_err());
    }

    #[test]
    fn group_names_round_trip() {
        for g in CognitiveGroup::ALL {
            assert_eq!(CognitiveGroup::from_name(g.name()), Some(g));
        }
    }

    #[test]
    fn single_group_rejected() {
        let recs: Vec<AssessmentRecord> = (0..6)
            .map(|i| AssessmentRecord { participant: format!("p{i}"), features: vec![i as f64], group: CognitiveGroup::Mci })
            .collect();
        assert!(classify_cognitive_status(&recs, &["f".into()], &ClassifierConfig::default()).is_err());
    }

    #[test]
    fn fp_rate_of_perfect_confusion_is_zero() {
        assert_eq!(false_positive_rate(&[[3, 0, 0], [0, 2, 0], [0, 0, 4]]), 0.0);
        assert!((false_positive_rate(&[[1, 1, 0], [0, 2, 0], [0, 0, 2]]) - (1.0 / 4.0) / 3.0).abs() < 1e-12);
    }
}
