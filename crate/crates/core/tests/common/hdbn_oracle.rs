//! Probability-space activity models: sampling, exhaustive path search and
//! table comparison up to state relabelling.

use cogassess::activity::{Alphabet, ContextTuple, HdbnModel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Tables {
    pub prior: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub emission: [Vec<Vec<f64>>; 4],
}

impl Tables {
    pub fn of(model: &HdbnModel) -> Self {
        Self { prior: model.prior(), transition: model.transition(), emission: std::array::from_fn(|l| model.emission(l)) }
    }

    pub fn model(&self, alphabet: Alphabet) -> HdbnModel {
        HdbnModel::from_probabilities(alphabet, self.prior.clone(), self.transition.clone(), self.emission.clone()).unwrap()
    }

    pub fn states(&self) -> usize {
        self.prior.len()
    }

    /// Tables with state `i` renamed `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.states();
        let mut prior = vec![0.0; k];
        let mut transition = vec![vec![0.0; k]; k];
        let mut emission: [Vec<Vec<f64>>; 4] = std::array::from_fn(|_| vec![Vec::new(); k]);
        for i in 0..k {
            prior[perm[i]] = self.prior[i];
            for j in 0..k {
                transition[perm[i]][perm[j]] = self.transition[i][j];
            }
            for l in 0..4 {
                emission[l][perm[i]] = self.emission[l][i].clone();
            }
        }
        Self { prior, transition, emission }
    }
}

fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

pub fn random_tables(rng: &mut ChaCha8Rng, k: usize, alphabet: Alphabet) -> Tables {
    Tables {
        prior: simplex(rng, k),
        transition: (0..k).map(|_| simplex(rng, k)).collect(),
        emission: alphabet.sizes.map(|v| (0..k).map(|_| simplex(rng, v)).collect()),
    }
}

fn draw(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

fn tuple_of(slice: usize, sym: [usize; 4]) -> ContextTuple {
    let opt = |s: usize| if s == 0 { None } else { Some(s) };
    ContextTuple { slice, gesture: sym[0] + 1, posture: sym[1] + 1, ambient: opt(sym[2]), object: opt(sym[3]) }
}

/// Samples `len` slices; returns the tuples and the 0-based hidden states.
pub fn sample(t: &Tables, rng: &mut ChaCha8Rng, len: usize) -> (Vec<ContextTuple>, Vec<usize>) {
    let mut states = Vec::with_capacity(len);
    let mut obs = Vec::with_capacity(len);
    let mut s = draw(rng, &t.prior);
    for i in 0..len {
        if i > 0 {
            s = draw(rng, &t.transition[s]);
        }
        let sym = std::array::from_fn(|l| draw(rng, &t.emission[l][s]));
        states.push(s);
        obs.push(tuple_of(i, sym));
    }
    (obs, states)
}

fn symbols(o: &ContextTuple) -> [usize; 4] {
    [o.gesture - 1, o.posture - 1, o.ambient.unwrap_or(0), o.object.unwrap_or(0)]
}

/// Natural-log probability of the joint `(path, obs)`; `path` is 0-based.
pub fn path_log_prob(t: &Tables, obs: &[ContextTuple], path: &[usize]) -> f64 {
    let mut p = t.prior[path[0]].ln();
    for (i, o) in obs.iter().enumerate() {
        if i > 0 {
            p += t.transition[path[i - 1]][path[i]].ln();
        }
        let s = symbols(o);
        for l in 0..4 {
            p += t.emission[l][path[i]][s[l]].ln();
        }
    }
    p
}

/// Best joint log-probability over all `k^T` paths.
pub fn enumerate_best(t: &Tables, obs: &[ContextTuple]) -> (f64, Vec<usize>) {
    let k = t.states();
    let n = obs.len();
    let mut path = vec![0; n];
    let mut best = (f64::NEG_INFINITY, path.clone());
    loop {
        let p = path_log_prob(t, obs, &path);
        if p > best.0 {
            best = (p, path.clone());
        }
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            path[i] += 1;
            if path[i] < k {
                break;
            }
            path[i] = 0;
        }
    }
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Worst row total variation between transition and emission tables,
/// minimised over relabellings of `fitted`; also returns the relabelling.
pub fn table_distance(truth: &Tables, fitted: &Tables) -> (f64, Vec<usize>) {
    let k = truth.states();
    let mut best = (f64::INFINITY, Vec::new());
    for perm in permutations(k) {
        // fitted state perm[i] plays the role of true state i
        let mut worst = 0.0f64;
        for i in 0..k {
            let row: Vec<f64> = (0..k).map(|j| fitted.transition[perm[i]][perm[j]]).collect();
            worst = worst.max(total_variation(&truth.transition[i], &row));
            for l in 0..4 {
                worst = worst.max(total_variation(&truth.emission[l][i], &fitted.emission[l][perm[i]]));
            }
        }
        if worst < best.0 {
            best = (worst, perm);
        }
    }
    best
}
