//! Support vector machines trained by sequential minimal optimisation.
//!
//! [`solve_smo`] handles the generic dual
//!
//! ```text
//! minimize 1/2 a^T Q a + p^T a   subject to  y^T a = const, 0 <= a_i <= C
//! ```
//!
//! with `Q_ij = y_i y_j K(i, j)`, using maximal-gain (second order) working
//! pair selection. Classification and epsilon-regression are both written
//! as instances of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => (-gamma * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).exp(),
        }
    }

    pub fn gram(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = xs.len();
        let mut k = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = self.eval(&xs[i], &xs[j]);
                k[i][j] = v;
                k[j][i] = v;
            }
        }
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoSettings {
    /// Stop when the maximal KKT violation falls below this.
    pub eps: f64,
    pub max_iterations: usize,
}

impl Default for SmoSettings {
    fn default() -> Self {
        Self { eps: 1e-6, max_iterations: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    /// `1/2 a^T Q a + p^T a` at the solution.
    pub objective: f64,
    /// Maximal violating-pair gap at termination.
    pub kkt_gap: f64,
    pub iterations: usize,
}

/// Solves the SMO dual. `kernel(i, j)` is the kernel value between the
/// samples behind variables `i` and `j`; `alpha` must be feasible.
pub fn solve_smo(
    kernel: impl Fn(usize, usize) -> f64,
    p: &[f64],
    y: &[f64],
    c: &[f64],
    mut alpha: Vec<f64>,
    settings: &SmoSettings,
) -> Result<SmoSolution> {
    let n = p.len();
    let q = |i: usize, j: usize| y[i] * y[j] * kernel(i, j);
    let diag: Vec<f64> = (0..n).map(|i| q(i, i)).collect();
    let mut grad = p.to_vec();
    for j in 0..n {
        if alpha[j] != 0.0 {
            for (i, g) in grad.iter_mut().enumerate() {
                *g += q(i, j) * alpha[j];
            }
        }
    }
    let is_up = |a: f64, yi: f64, ci: f64| if yi > 0.0 { a < ci } else { a > 0.0 };
    let is_low = |a: f64, yi: f64, ci: f64| if yi > 0.0 { a > 0.0 } else { a < ci };

    let mut iterations = 0;
    let gap = loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if is_up(alpha[t], y[t], c[t]) && -y[t] * grad[t] >= gmax {
                if -y[t] * grad[t] > gmax || i_sel == usize::MAX {
                    gmax = -y[t] * grad[t];
                    i_sel = t;
                }
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_gain = f64::INFINITY;
        for t in 0..n {
            if !is_low(alpha[t], y[t], c[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i_sel != usize::MAX && v < gmax {
                let b = gmax - v;
                let mut a = diag[i_sel] + diag[t] - 2.0 * y[i_sel] * y[t] * q(i_sel, t);
                if a <= 0.0 {
                    a = TAU;
                }
                let gain = -(b * b) / a;
                if gain < best_gain {
                    best_gain = gain;
                    j_sel = t;
                }
            }
        }
        let gap = gmax - gmin;
        if i_sel == usize::MAX || j_sel == usize::MAX || gap < settings.eps {
            break gap.max(0.0);
        }
        iterations += 1;
        if iterations > settings.max_iterations {
            return Err(Error::NoConvergence { iterations: settings.max_iterations, residual: gap });
        }
        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if y[i] != y[j] {
            let quad = (diag[i] + diag[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 && alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = diff;
            } else if diff <= 0.0 && alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > c[i] - c[j] && alpha[i] > c[i] {
                alpha[i] = c[i];
                alpha[j] = c[i] - diff;
            } else if diff <= c[i] - c[j] && alpha[j] > c[j] {
                alpha[j] = c[j];
                alpha[i] = c[j] + diff;
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c[i] && alpha[i] > c[i] {
                alpha[i] = c[i];
                alpha[j] = sum - c[i];
            } else if sum <= c[i] && alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c[j] && alpha[j] > c[j] {
                alpha[j] = c[j];
                alpha[i] = sum - c[j];
            } else if sum <= c[j] && alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    };

    // Offset: average over free variables, else the midpoint of the bounds.
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c[t] {
            free_sum += yg;
            free_count += 1;
        } else if (alpha[t] >= c[t] && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free_count > 0 {
        free_sum / free_count as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else {
        lb.max(0.0)
    };
    let objective = 0.5 * (0..n).map(|t| alpha[t] * (grad[t] - p[t])).sum::<f64>()
        + (0..n).map(|t| alpha[t] * p[t]).sum::<f64>();
    Ok(SmoSolution { alpha, rho, objective, kkt_gap: gap, iterations })
}

/// Two-class machine separating `negative` (-1) from `positive` (+1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub negative: usize,
    pub positive: usize,
    pub support_vectors: Vec<Vec<f64>>,
    /// `y_i * alpha_i` per support vector.
    pub coefficients: Vec<f64>,
    /// Dual variables of the support vectors, each in `[0, C]`.
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub kernel: Kernel,
    pub c: f64,
    pub dual_objective: f64,
    pub kkt_gap: f64,
}

impl BinarySvm {
    pub fn train(xs: &[Vec<f64>], ys: &[f64], c: f64, kernel: Kernel, negative: usize, positive: usize) -> Result<Self> {
        let gram = kernel.gram(xs);
        let n = xs.len();
        let sol = solve_smo(|i, j| gram[i][j], &vec![-1.0; n], ys, &vec![c; n], vec![0.0; n], &SmoSettings::default())?;
        let keep: Vec<usize> = (0..n).filter(|&i| sol.alpha[i] > 0.0).collect();
        Ok(Self {
            negative,
            positive,
            support_vectors: keep.iter().map(|&i| xs[i].clone()).collect(),
            coefficients: keep.iter().map(|&i| ys[i] * sol.alpha[i]).collect(),
            alphas: keep.iter().map(|&i| sol.alpha[i]).collect(),
            bias: -sol.rho,
            kernel,
            c,
            dual_objective: -sol.objective,
            kkt_gap: sol.kkt_gap,
        })
    }

    /// Positive values favour `positive`.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors.iter().zip(&self.coefficients).map(|(sv, c)| c * self.kernel.eval(sv, x)).sum::<f64>()
            + self.bias
    }
}

/// One-vs-one multiclass machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Sorted class labels.
    pub classes: Vec<usize>,
    pub machines: Vec<BinarySvm>,
    pub kernel: Kernel,
    pub c: f64,
}

impl SvmModel {
    /// Votes per class, plus the summed decision margin in each class's favour.
    pub fn votes(&self, x: &[f64]) -> Vec<(usize, usize, f64)> {
        let mut tally: Vec<(usize, usize, f64)> = self.classes.iter().map(|&c| (c, 0, 0.0)).collect();
        let index = |label: usize| self.classes.iter().position(|&c| c == label).unwrap();
        for m in &self.machines {
            let d = m.decision(x);
            let winner = if d > 0.0 { m.positive } else { m.negative };
            tally[index(winner)].1 += 1;
            tally[index(m.positive)].2 += d;
            tally[index(m.negative)].2 -= d;
        }
        tally
    }

    /// Majority vote; ties go to the smallest label.
    pub fn predict(&self, x: &[f64]) -> usize {
        self.votes(x).into_iter().fold((usize::MAX, 0usize), |best, (c, v, _)| {
            if best.0 == usize::MAX || v > best.1 {
                (c, v)
            } else {
                best
            }
        }).0
    }

    /// Summed one-vs-one margin in favour of `label`.
    pub fn class_score(&self, x: &[f64], label: usize) -> f64 {
        self.votes(x).into_iter().find(|t| t.0 == label).map_or(f64::NEG_INFINITY, |t| t.2)
    }
}

pub fn smo_train(features: &[Vec<f64>], labels: &[usize], c: f64, kernel: Kernel) -> Result<SvmModel> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::invalid("need one label per training sample"));
    }
    if !(c > 0.0) {
        return Err(Error::invalid("C must be positive"));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("SVM training needs at least two classes"));
    }
    let mut machines = Vec::new();
    for (a, &neg) in classes.iter().enumerate() {
        for &pos in &classes[a + 1..] {
            let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = features
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == neg || l == pos)
                .map(|(x, &l)| (x.clone(), if l == pos { 1.0 } else { -1.0 }))
                .unzip();
            machines.push(BinarySvm::train(&xs, &ys, c, kernel, neg, pos)?);
        }
    }
    Ok(SvmModel { classes, machines, kernel, c })
}

pub fn svm_predict(model: &SvmModel, features: &[f64]) -> usize {
    model.predict(features)
}

/// Epsilon-insensitive support vector regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub kernel: Kernel,
}

impl SvrModel {
    pub fn train(xs: &[Vec<f64>], targets: &[f64], c: f64, epsilon: f64, kernel: Kernel) -> Result<Self> {
        Self::train_with(xs, targets, c, epsilon, kernel, &SmoSettings::default())
    }

    pub fn train_with(
        xs: &[Vec<f64>],
        targets: &[f64],
        c: f64,
        epsilon: f64,
        kernel: Kernel,
        settings: &SmoSettings,
    ) -> Result<Self> {
        let l = xs.len();
        if l == 0 || targets.len() != l {
            return Err(Error::invalid("need one target per training sample"));
        }
        let gram = kernel.gram(xs);
        let p: Vec<f64> = (0..2 * l).map(|i| if i < l { epsilon - targets[i] } else { epsilon + targets[i - l] }).collect();
        let y: Vec<f64> = (0..2 * l).map(|i| if i < l { 1.0 } else { -1.0 }).collect();
        let sol = solve_smo(|i, j| gram[i % l][j % l], &p, &y, &vec![c; 2 * l], vec![0.0; 2 * l], settings)?;
        let beta: Vec<f64> = (0..l).map(|i| sol.alpha[i] - sol.alpha[i + l]).collect();
        let keep: Vec<usize> = (0..l).filter(|&i| beta[i] != 0.0).collect();
        Ok(Self {
            support_vectors: keep.iter().map(|&i| xs[i].clone()).collect(),
            coefficients: keep.iter().map(|&i| beta[i]).collect(),
            bias: -sol.rho,
            kernel,
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.support_vectors.iter().zip(&self.coefficients).map(|(sv, c)| c * self.kernel.eval(sv, x)).sum::<f64>()
            + self.bias
    }
}
