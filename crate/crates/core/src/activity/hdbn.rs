//! Hidden activity chain with four conditionally independent observation
//! layers. Training is Baum-Welch with per-slice scaling; decoding is a
//! log-space Viterbi pass.
//!
//! EM iterates on unsmoothed maximum-likelihood tables, so the recorded
//! log-likelihood never decreases. The returned model comes from one last
//! M-step on the converged expected counts with Laplace pseudo-counts added.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{intervals_from_labels, Alphabet, ContextTuple, DecodedSequence};
use crate::error::{Error, Result};

pub const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdbnModel {
    pub alphabet: Alphabet,
    pub log_prior: Vec<f64>,
    /// `log_transition[i][j] = ln P(next = j | current = i)`.
    pub log_transition: Vec<Vec<f64>>,
    /// Per layer, `[state][symbol]`.
    pub log_emission: [Vec<Vec<f64>>; 4],
}

fn check_row(row: &[f64], len: usize, what: &str) -> Result<()> {
    if row.len() != len {
        return Err(Error::invalid(format!("{what}: expected {len} entries, got {}", row.len())));
    }
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid(format!("{what}: entries must be finite and non-negative")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::invalid(format!("{what}: sums to {s}")));
    }
    Ok(())
}

fn ln_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect()
}

fn exp_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().map(|p| p.exp()).collect()).collect()
}

impl HdbnModel {
    /// Builds a model from probability tables; every row must sum to 1.
    pub fn from_probabilities(
        alphabet: Alphabet,
        prior: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emission: [Vec<Vec<f64>>; 4],
    ) -> Result<Self> {
        let k = prior.len();
        if k == 0 {
            return Err(Error::invalid("model needs at least one state"));
        }
        check_row(&prior, k, "prior")?;
        if transition.len() != k {
            return Err(Error::invalid("transition matrix must be square"));
        }
        for (i, row) in transition.iter().enumerate() {
            check_row(row, k, &format!("transition row {}", i + 1))?;
        }
        for (l, table) in emission.iter().enumerate() {
            if table.len() != k {
                return Err(Error::invalid(format!("{} emissions need one row per state", super::LAYER_NAMES[l])));
            }
            for (i, row) in table.iter().enumerate() {
                check_row(row, alphabet.sizes[l], &format!("{} emission row {}", super::LAYER_NAMES[l], i + 1))?;
            }
        }
        Ok(Self {
            alphabet,
            log_prior: prior.iter().map(|p| p.ln()).collect(),
            log_transition: ln_rows(&transition),
            log_emission: emission.map(|t| ln_rows(&t)),
        })
    }

    pub fn states(&self) -> usize {
        self.log_prior.len()
    }

    pub fn prior(&self) -> Vec<f64> {
        self.log_prior.iter().map(|p| p.exp()).collect()
    }

    pub fn transition(&self) -> Vec<Vec<f64>> {
        exp_rows(&self.log_transition)
    }

    pub fn emission(&self, layer: usize) -> Vec<Vec<f64>> {
        exp_rows(&self.log_emission[layer])
    }

    /// Largest deviation of any stochastic row from unit sum.
    pub fn max_row_error(&self) -> f64 {
        let row_err = |r: &[f64]| (r.iter().map(|p| p.exp()).sum::<f64>() - 1.0).abs();
        let mut worst = row_err(&self.log_prior);
        for r in self.log_transition.iter().chain(self.log_emission.iter().flatten()) {
            worst = worst.max(row_err(r));
        }
        worst
    }

    fn log_emit(&self, state: usize, sym: &[usize; 4]) -> f64 {
        (0..4).map(|l| self.log_emission[l][state][sym[l]]).sum()
    }

    fn encode(&self, obs: &[ContextTuple]) -> Result<Vec<[usize; 4]>> {
        obs.iter().enumerate().map(|(i, t)| self.alphabet.encode(t, i)).collect()
    }

    /// `ln P(obs)` by the scaled forward pass.
    pub fn log_likelihood(&self, obs: &[ContextTuple]) -> Result<f64> {
        if obs.is_empty() {
            return Err(Error::invalid("empty observation sequence"));
        }
        let syms = self.encode(obs)?;
        let p = Params::from_model(self);
        Ok(p.forward_backward(&syms, None)?)
    }
}

/// One training sequence; `labels` holds a 1-based activity per slice when
/// annotations exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub tuples: Vec<ContextTuple>,
    pub labels: Option<Vec<usize>>,
}

impl LabeledSequence {
    pub fn unlabeled(tuples: Vec<ContextTuple>) -> Self {
        Self { tuples, labels: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once `(ll_new - ll_old) / |ll_old|` falls below this.
    pub tol: f64,
    /// Laplace pseudo-count added to every table cell.
    pub smoothing: f64,
    /// Random initialisations tried when no sequence carries labels.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-6, smoothing: 1e-3, restarts: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub model: HdbnModel,
    /// Log-likelihood of the training data before each M-step of the kept run.
    pub trace: Vec<f64>,
    /// Log-likelihood under the returned, smoothed model.
    pub log_likelihood: f64,
    pub converged: bool,
}

/// Probability-space tables, row-major.
#[derive(Debug, Clone)]
struct Params {
    k: usize,
    sizes: [usize; 4],
    prior: Vec<f64>,
    trans: Vec<f64>,
    emis: [Vec<f64>; 4],
}

/// Expected counts gathered by one E-step.
struct Counts {
    prior: Vec<f64>,
    trans: Vec<f64>,
    emis: [Vec<f64>; 4],
}

impl Counts {
    fn zeros(k: usize, sizes: [usize; 4]) -> Self {
        Self { prior: vec![0.0; k], trans: vec![0.0; k * k], emis: sizes.map(|v| vec![0.0; k * v]) }
    }
}

fn normalize_into(counts: &[f64], alpha: f64, previous: &[f64], out: &mut [f64]) {
    let total: f64 = counts.iter().sum::<f64>() + alpha * counts.len() as f64;
    if total > 0.0 {
        for (o, c) in out.iter_mut().zip(counts) {
            *o = (c + alpha) / total;
        }
    } else {
        out.copy_from_slice(previous);
    }
}

impl Params {
    fn from_model(m: &HdbnModel) -> Self {
        let flat = |rows: &[Vec<f64>]| rows.iter().flat_map(|r| r.iter().map(|p| p.exp())).collect::<Vec<f64>>();
        Self {
            k: m.states(),
            sizes: m.alphabet.sizes,
            prior: m.prior(),
            trans: flat(&m.log_transition),
            emis: std::array::from_fn(|l| flat(&m.log_emission[l])),
        }
    }

    fn to_model(&self, alphabet: Alphabet) -> HdbnModel {
        let rows = |v: &[f64], w: usize| v.chunks(w).map(|r| r.iter().map(|p| p.ln()).collect()).collect::<Vec<Vec<f64>>>();
        HdbnModel {
            alphabet,
            log_prior: self.prior.iter().map(|p| p.ln()).collect(),
            log_transition: rows(&self.trans, self.k),
            log_emission: std::array::from_fn(|l| rows(&self.emis[l], self.sizes[l])),
        }
    }

    fn emit(&self, state: usize, sym: &[usize; 4]) -> f64 {
        (0..4).map(|l| self.emis[l][state * self.sizes[l] + sym[l]]).product()
    }

    /// Scaled forward-backward; accumulates expected counts when asked and
    /// returns the sequence log-likelihood.
    fn forward_backward(&self, syms: &[[usize; 4]], counts: Option<&mut Counts>) -> Result<f64> {
        let (k, n) = (self.k, syms.len());
        let b: Vec<f64> = syms.iter().flat_map(|s| (0..k).map(move |j| self.emit(j, s))).collect();
        let mut alpha = vec![0.0; n * k];
        let mut scale = vec![0.0; n];
        for t in 0..n {
            for j in 0..k {
                let pred = if t == 0 {
                    self.prior[j]
                } else {
                    (0..k).map(|i| alpha[(t - 1) * k + i] * self.trans[i * k + j]).sum()
                };
                alpha[t * k + j] = pred * b[t * k + j];
            }
            let c: f64 = alpha[t * k..(t + 1) * k].iter().sum();
            if !(c > 0.0) {
                return Err(Error::Degenerate(format!("slice {t} has zero probability under the model")));
            }
            scale[t] = c;
            alpha[t * k..(t + 1) * k].iter_mut().for_each(|a| *a /= c);
        }
        let ll = scale.iter().map(|c| c.ln()).sum();
        let Some(counts) = counts else { return Ok(ll) };

        let mut beta = vec![1.0; n * k];
        for t in (0..n - 1).rev() {
            for i in 0..k {
                let s: f64 = (0..k).map(|j| self.trans[i * k + j] * b[(t + 1) * k + j] * beta[(t + 1) * k + j]).sum();
                beta[t * k + i] = s / scale[t + 1];
            }
        }
        for t in 0..n {
            for j in 0..k {
                let g = alpha[t * k + j] * beta[t * k + j];
                if t == 0 {
                    counts.prior[j] += g;
                }
                for l in 0..4 {
                    counts.emis[l][j * self.sizes[l] + syms[t][l]] += g;
                }
            }
            if t + 1 < n {
                for i in 0..k {
                    let a = alpha[t * k + i] / scale[t + 1];
                    for j in 0..k {
                        counts.trans[i * k + j] += a * self.trans[i * k + j] * b[(t + 1) * k + j] * beta[(t + 1) * k + j];
                    }
                }
            }
        }
        Ok(ll)
    }

    fn m_step(&self, c: &Counts, alpha: f64) -> Params {
        let mut next = self.clone();
        normalize_into(&c.prior, alpha, &self.prior, &mut next.prior);
        for i in 0..self.k {
            let r = i * self.k..(i + 1) * self.k;
            normalize_into(&c.trans[r.clone()], alpha, &self.trans[r.clone()], &mut next.trans[r]);
        }
        for l in 0..4 {
            let v = self.sizes[l];
            for i in 0..self.k {
                let r = i * v..(i + 1) * v;
                normalize_into(&c.emis[l][r.clone()], alpha, &self.emis[l][r.clone()], &mut next.emis[l][r]);
            }
        }
        next
    }

    fn random(k: usize, sizes: [usize; 4], rng: &mut ChaCha8Rng) -> Params {
        let mut draw = |len: usize, width: usize| -> Vec<f64> {
            let mut v: Vec<f64> = (0..len).map(|_| 0.1 + rng.random::<f64>()).collect();
            for row in v.chunks_mut(width) {
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= s);
            }
            v
        };
        let prior = draw(k, k);
        let trans = draw(k * k, k);
        let emis = sizes.map(|v| draw(k * v, v));
        Params { k, sizes, prior, trans, emis }
    }

    fn uniform(k: usize, sizes: [usize; 4]) -> Params {
        Params {
            k,
            sizes,
            prior: vec![1.0 / k as f64; k],
            trans: vec![1.0 / k as f64; k * k],
            emis: sizes.map(|v| vec![1.0 / v as f64; k * v]),
        }
    }
}

fn e_step(p: &Params, data: &[Vec<[usize; 4]>]) -> Result<(f64, Counts)> {
    let mut counts = Counts::zeros(p.k, p.sizes);
    let mut ll = 0.0;
    for s in data {
        ll += p.forward_backward(s, Some(&mut counts))?;
    }
    Ok((ll, counts))
}

/// Counts over annotated slices only.
fn supervised_counts(k: usize, sizes: [usize; 4], data: &[Vec<[usize; 4]>], seqs: &[LabeledSequence]) -> Result<Counts> {
    let mut c = Counts::zeros(k, sizes);
    for (syms, seq) in data.iter().zip(seqs) {
        let Some(labels) = &seq.labels else { continue };
        if labels.len() != syms.len() {
            return Err(Error::invalid("label count differs from slice count"));
        }
        for (t, &lab) in labels.iter().enumerate() {
            if lab == 0 || lab > k {
                return Err(Error::invalid(format!("slice {t}: activity label {lab} outside 1..={k}")));
            }
            let j = lab - 1;
            if t == 0 {
                c.prior[j] += 1.0;
            } else {
                c.trans[(labels[t - 1] - 1) * k + j] += 1.0;
            }
            for l in 0..4 {
                c.emis[l][j * sizes[l] + syms[t][l]] += 1.0;
            }
        }
    }
    Ok(c)
}

struct Run {
    params: Params,
    trace: Vec<f64>,
    last_counts: Counts,
    converged: bool,
}

fn run_em(mut p: Params, data: &[Vec<[usize; 4]>], cfg: &EmConfig) -> Result<Run> {
    let mut trace = Vec::new();
    loop {
        let (ll, counts) = e_step(&p, data)?;
        let converged = trace.last().is_some_and(|&prev: &f64| (ll - prev) / prev.abs().max(f64::MIN_POSITIVE) < cfg.tol);
        trace.push(ll);
        if converged || trace.len() > cfg.max_iters {
            return Ok(Run { params: p, trace, last_counts: counts, converged });
        }
        p = p.m_step(&counts, 0.0);
    }
}

/// Fits a `k`-state model. Labelled sequences seed the tables; otherwise the
/// best of `cfg.restarts` seeded random starts is kept.
pub fn em_train(sequences: &[LabeledSequence], k: usize, alphabet: Alphabet, cfg: &EmConfig) -> Result<EmFit> {
    if k == 0 {
        return Err(Error::invalid("need at least one activity state"));
    }
    if sequences.is_empty() || sequences.iter().any(|s| s.tuples.is_empty()) {
        return Err(Error::invalid("training needs non-empty sequences"));
    }
    let alphabet = Alphabet::custom(alphabet.sizes)?;
    let data: Vec<Vec<[usize; 4]>> = sequences
        .iter()
        .map(|s| s.tuples.iter().enumerate().map(|(i, t)| alphabet.encode(t, i)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let sizes = alphabet.sizes;

    let starts: Vec<Params> = if sequences.iter().any(|s| s.labels.is_some()) {
        let counts = supervised_counts(k, sizes, &data, sequences)?;
        vec![Params::uniform(k, sizes).m_step(&counts, cfg.smoothing.max(f64::MIN_POSITIVE))]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        (0..cfg.restarts.max(1)).map(|_| Params::random(k, sizes, &mut rng)).collect()
    };

    let mut best: Option<Run> = None;
    for (r, start) in starts.into_iter().enumerate() {
        let run = run_em(start, &data, cfg)?;
        log::debug!("em start {r}: {} iterations, ll {:.6}", run.trace.len(), run.trace.last().unwrap());
        if best.as_ref().is_none_or(|b| run.trace.last().unwrap() > b.trace.last().unwrap()) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    let smoothed = best.params.m_step(&best.last_counts, cfg.smoothing);
    let log_likelihood = data.iter().map(|s| smoothed.forward_backward(s, None)).sum::<Result<f64>>()?;
    if !best.converged {
        log::warn!("em stopped after {} iterations without reaching tolerance {}", cfg.max_iters, cfg.tol);
    }
    Ok(EmFit { model: smoothed.to_model(alphabet), trace: best.trace, log_likelihood, converged: best.converged })
}

/// Most probable activity path; among equally probable predecessors and
/// final states the smaller index wins.
pub fn viterbi_decode(model: &HdbnModel, obs: &[ContextTuple]) -> Result<DecodedSequence> {
    if obs.is_empty() {
        return Err(Error::invalid("empty observation sequence"));
    }
    let syms = model.encode(obs)?;
    let k = model.states();
    let n = syms.len();
    let mut delta: Vec<f64> = (0..k).map(|j| model.log_prior[j] + model.log_emit(j, &syms[0])).collect();
    let mut back = vec![0usize; n * k];
    for t in 1..n {
        let mut next = vec![0.0; k];
        for j in 0..k {
            let (mut arg, mut best) = (0, delta[0] + model.log_transition[0][j]);
            for i in 1..k {
                let v = delta[i] + model.log_transition[i][j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            back[t * k + j] = arg;
            next[j] = best + model.log_emit(j, &syms[t]);
        }
        delta = next;
    }
    let (mut state, mut score) = (0, delta[0]);
    for (j, &d) in delta.iter().enumerate().skip(1) {
        if d > score {
            score = d;
            state = j;
        }
    }
    let mut path = vec![0; n];
    for t in (0..n).rev() {
        path[t] = state + 1;
        state = back[t * k + state];
    }
    let slices: Vec<usize> = obs.iter().map(|o| o.slice).collect();
    Ok(DecodedSequence { intervals: intervals_from_labels(&path, &slices), labels: path, log_probability: score })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tuple(slice: usize, g: usize, p: usize, a: Option<usize>, o: Option<usize>) -> ContextTuple {
        ContextTuple { slice, gesture: g, posture: p, ambient: a, object: o }
    }

    fn tiny() -> Alphabet {
        Alphabet::custom([2, 2, 2, 2]).unwrap()
    }

    fn uniform_model(k: usize, a: Alphabet) -> HdbnModel {
        let row = |n: usize| vec![1.0 / n as f64; n];
        HdbnModel::from_probabilities(a, row(k), vec![row(k); k], a.sizes.map(|v| vec![row(v); k])).unwrap()
    }

    #[test]
    fn uniform_model_decodes_to_first_state() {
        let obs: Vec<_> = (0..7).map(|t| tuple(t, 1 + t % 2, 1, None, Some(1))).collect();
        let d = viterbi_decode(&uniform_model(3, tiny()), &obs).unwrap();
        assert_eq!(d.labels, vec![1; 7]);
        assert_eq!(d.intervals.len(), 1);
    }

    #[test]
    fn rows_must_sum_to_one() {
        let a = tiny();
        let bad = HdbnModel::from_probabilities(a, vec![0.5, 0.4], vec![vec![0.5, 0.5]; 2], a.sizes.map(|v| vec![vec![1.0 / v as f64; v]; 2]));
        assert!(bad.is_err());
    }

    #[test]
    fn out_of_alphabet_reports_slice() {
        let obs = vec![tuple(0, 1, 1, None, None), tuple(1, 1, 3, None, None)];
        match viterbi_decode(&uniform_model(2, tiny()), &obs) {
            Err(Error::SymbolOutOfRange { slice, layer, value, .. }) => assert_eq!((slice, layer, value), (1, "posture", 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_state_gives_smoothed_frequencies() {
        let a = tiny();
        let obs: Vec<_> = [1, 1, 1, 2].iter().enumerate().map(|(t, &g)| tuple(t, g, 1, None, None)).collect();
        let fit = em_train(&[LabeledSequence::unlabeled(obs)], 1, a, &EmConfig::default()).unwrap();
        let alpha = 1e-3;
        let g = fit.model.emission(0);
        assert!((g[0][0] - (3.0 + alpha) / (4.0 + 2.0 * alpha)).abs() < 1e-12);
        assert!((fit.model.transition()[0][0] - 1.0).abs() < 1e-12);
        assert!(fit.model.max_row_error() < ROW_TOLERANCE);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(em_train(&[], 2, tiny(), &EmConfig::default()).is_err());
        assert!(em_train(&[LabeledSequence::unlabeled(vec![])], 2, tiny(), &EmConfig::default()).is_err());
        assert!(viterbi_decode(&uniform_model(2, tiny()), &[]).is_err());
    }

    #[test]
    fn supervised_start_follows_labels() {
        let a = tiny();
        let mut tuples = Vec::new();
        let mut labels = Vec::new();
        for t in 0..40 {
            let s = (t / 10) % 2;
            tuples.push(tuple(t, s + 1, s + 1, None, None));
            labels.push(s + 1);
        }
        let seq = LabeledSequence { tuples: tuples.clone(), labels: Some(labels.clone()) };
        let fit = em_train(&[seq], 2, a, &EmConfig::default()).unwrap();
        assert_eq!(viterbi_decode(&fit.model, &tuples).unwrap().labels, labels);
        assert!(fit.model.log_emission.iter().flatten().flatten().all(|v| v.is_finite()));
    }
}
