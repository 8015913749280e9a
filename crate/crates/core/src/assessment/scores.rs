//! Performance scores: bagged support vector regression for the observed
//! task completeness, sequencing and interruption scores, and a label-free
//! (or discriminant) one-dimensional task score.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::min_max_normalize;
use super::Standardizer;
use crate::acc::svm::SmoSettings;
use crate::acc::{Kernel, SvrModel};
use crate::error::{Error, Result};

pub const MIN_TRAINING_RECORDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaggingConfig {
    pub bags: usize,
    pub c: f64,
    /// Insensitive-zone half width in standardised target units.
    pub epsilon: f64,
    pub kernel: Kernel,
    pub seed: u64,
    /// Stopping tolerance of each regressor's solver.
    pub tolerance: f64,
}

impl Default for BaggingConfig {
    fn default() -> Self {
        Self { bags: 25, c: 10.0, epsilon: 0.01, kernel: Kernel::Linear, seed: 0, tolerance: 1e-3 }
    }
}

/// `bags` bootstrap resamples of `0..n`, each of size `n`.
pub fn bootstrap_indices(n: usize, bags: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..bags).map(|_| (0..n).map(|_| rng.random_range(0..n)).collect()).collect()
}

/// Average of support vector regressors fitted to bootstrap resamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedRegressor {
    pub scaler: Standardizer,
    pub target_mean: f64,
    pub target_scale: f64,
    pub members: Vec<SvrModel>,
    /// Set when every training target is equal.
    pub constant: Option<f64>,
}

impl BaggedRegressor {
    pub fn train(xs: &[Vec<f64>], ys: &[f64], cfg: &BaggingConfig) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::invalid("need one target per record"));
        }
        if xs.len() < MIN_TRAINING_RECORDS {
            return Err(Error::TooShort { needed: MIN_TRAINING_RECORDS, got: xs.len() });
        }
        if cfg.bags == 0 {
            return Err(Error::invalid("bagging needs at least one resample"));
        }
        let scaler = Standardizer::fit(xs)?;
        let target_mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|y| (y - target_mean).powi(2)).sum::<f64>() / ys.len() as f64;
        if ys.iter().all(|y| *y == ys[0]) {
            log::warn!("constant training target {}; using a constant predictor", ys[0]);
            return Ok(Self { scaler, target_mean, target_scale: 1.0, members: Vec::new(), constant: Some(ys[0]) });
        }
        let target_scale = var.sqrt();
        let zx: Vec<Vec<f64>> = xs.iter().map(|x| scaler.transform(x)).collect();
        let zy: Vec<f64> = ys.iter().map(|y| (y - target_mean) / target_scale).collect();
        let mut members = Vec::with_capacity(cfg.bags);
        for idx in bootstrap_indices(xs.len(), cfg.bags, cfg.seed) {
            let bx: Vec<Vec<f64>> = idx.iter().map(|&i| zx[i].clone()).collect();
            let by: Vec<f64> = idx.iter().map(|&i| zy[i]).collect();
            let settings = SmoSettings { eps: cfg.tolerance, ..SmoSettings::default() };
            members.push(SvrModel::train_with(&bx, &by, cfg.c, cfg.epsilon, cfg.kernel, &settings)?);
        }
        Ok(Self { scaler, target_mean, target_scale, members, constant: None })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let z = self.scaler.transform(x);
        let mean = self.members.iter().map(|m| m.predict(&z)).sum::<f64>() / self.members.len() as f64;
        self.target_mean + self.target_scale * mean
    }
}

/// Regressors for task completeness, sequencing and interruption scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModels {
    pub tc: BaggedRegressor,
    pub seq: BaggedRegressor,
    pub int: BaggedRegressor,
}

/// `targets[i] = [tc, seq, int]` of record `i`.
pub fn train_score_models(features: &[Vec<f64>], targets: &[[f64; 3]], cfg: &BaggingConfig) -> Result<ScoreModels> {
    let col = |k: usize| targets.iter().map(|t| t[k]).collect::<Vec<f64>>();
    Ok(ScoreModels {
        tc: BaggedRegressor::train(features, &col(0), cfg)?,
        seq: BaggedRegressor::train(features, &col(1), cfg)?,
        int: BaggedRegressor::train(features, &col(2), cfg)?,
    })
}

/// Predicted `[tc, seq, int]`; scores are point counts, so negatives clip to 0.
pub fn predict_scores(models: &ScoreModels, features: &[f64]) -> [f64; 3] {
    [models.tc.predict(features), models.seq.predict(features), models.int.predict(features)].map(|v| v.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TaskScoreMethod {
    /// First principal direction of the centred features.
    PrincipalDirection,
    /// Fisher discriminant direction given one class label per row.
    Discriminant { labels: Vec<usize> },
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect()
}

/// Unit eigenvector of the largest eigenvalue of the sample covariance,
/// signed so its largest-magnitude component is positive.
pub fn principal_direction(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_matrix(rows)?;
    let d = rows[0].len();
    let mean = column_means(rows);
    let cov = DMatrix::from_fn(d, d, |a, b| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>());
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    orient(eig.eigenvectors.column(top).iter().copied().collect())
}

fn orient(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("zero projection direction".into()));
    }
    let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    let s = lead.signum() / norm;
    v.iter_mut().for_each(|x| *x *= s);
    Ok(v)
}

/// Leading generalised eigenvector of between- vs within-class scatter,
/// with a small ridge on the within-class scatter.
pub fn discriminant_direction(rows: &[Vec<f64>], labels: &[usize]) -> Result<Vec<f64>> {
    check_matrix(rows)?;
    if labels.len() != rows.len() {
        return Err(Error::invalid("need one label per row"));
    }
    let d = rows[0].len();
    let mean = column_means(rows);
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("discriminant direction needs two classes"));
    }
    let mut sw = DMatrix::<f64>::zeros(d, d);
    let mut sb = DMatrix::<f64>::zeros(d, d);
    for c in classes {
        let members: Vec<Vec<f64>> = rows.iter().zip(labels).filter(|(_, l)| **l == c).map(|(r, _)| r.clone()).collect();
        let mc = column_means(&members);
        for r in &members {
            for a in 0..d {
                for b in 0..d {
                    sw[(a, b)] += (r[a] - mc[a]) * (r[b] - mc[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                sb[(a, b)] += members.len() as f64 * (mc[a] - mean[a]) * (mc[b] - mean[b]);
            }
        }
    }
    let ridge = 1e-6 * (sw.trace() / d as f64).max(1e-12);
    for a in 0..d {
        sw[(a, a)] += ridge;
    }
    // whiten with Sw^{-1/2} so the problem stays symmetric
    let e = SymmetricEigen::new(sw);
    let inv_sqrt = &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(|l| 1.0 / l.sqrt())) * e.eigenvectors.transpose();
    let m = &inv_sqrt * sb * &inv_sqrt;
    let top = SymmetricEigen::new(m.clone());
    let u = top.eigenvectors.column(top.eigenvalues.imax()).into_owned();
    orient((inv_sqrt * u).iter().copied().collect())
}

fn check_matrix(rows: &[Vec<f64>]) -> Result<()> {
    if rows.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: rows.len() });
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("feature rows must share a non-zero width"));
    }
    Ok(())
}

/// One-dimensional projection of every row, min-max normalised into [0, 1].
/// A constant projection gives 0.5 everywhere.
pub fn unsupervised_task_score(rows: &[Vec<f64>], method: &TaskScoreMethod) -> Result<Vec<f64>> {
    check_matrix(rows)?;
    let dir = match method {
        TaskScoreMethod::PrincipalDirection => principal_direction(rows),
        TaskScoreMethod::Discriminant { labels } => discriminant_direction(rows, labels),
    };
    let dir = match dir {
        Ok(d) => d,
        Err(Error::Degenerate(_)) => vec![0.0; rows[0].len()],
        Err(e) => return Err(e),
    };
    let proj: Vec<f64> = rows.iter().map(|r| r.iter().zip(&dir).map(|(a, b)| a * b).sum()).collect();
    let (z, ok) = min_max_normalize(&proj);
    if !ok {
        log::warn!("task score projection is constant; every score set to 0.5");
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, ((i * 7) % 5) as f64, ((i * 3) % 4) as f64]).collect();
        let ys = xs.iter().map(|x| 2.0 * x[0] - x[1] + 0.5 * x[2] + 3.0).collect();
        (xs, ys)
    }

    #[test]
    fn constant_target() {
        let (xs, _) = line_data();
        let m = BaggedRegressor::train(&xs, &[4.0; 12], &BaggingConfig::default()).unwrap();
        assert_eq!(m.predict(&[100.0, -3.0, 2.0]), 4.0);
    }

    #[test]
    fn too_few_records() {
        let (xs, ys) = line_data();
        assert!(BaggedRegressor::train(&xs[..9], &ys[..9], &BaggingConfig::default()).is_err());
    }

    #[test]
    fn bootstrap_is_seeded() {
        assert_eq!(bootstrap_indices(10, 3, 4), bootstrap_indices(10, 3, 4));
        assert!(bootstrap_indices(10, 3, 4).iter().flatten().all(|&i| i < 10));
    }

    #[test]
    fn constant_rows_score_half() {
        let rows = vec![vec![1.0, 2.0]; 4];
        assert_eq!(unsupervised_task_score(&rows, &TaskScoreMethod::PrincipalDirection).unwrap(), vec![0.5; 4]);
    }

    #[test]
    fn discriminant_separates_classes() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 2) as f64 * 3.0 + 0.1 * (i as f64).sin(), (i as f64 * 1.3).cos() * 5.0]).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let d = discriminant_direction(&rows, &labels).unwrap();
        assert!(d[0].abs() > 10.0 * d[1].abs());
    }
}
