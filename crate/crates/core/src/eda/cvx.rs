//! Convex tonic/phasic decomposition of skin conductance.
//!
//! The model splits `y` into `M q + B l + C d` plus noise, where `A q` is a
//! sparse non-negative sudomotor driver, `M A^-1` is a discretised Bateman
//! impulse response, `B` holds cubic B-spline columns for the tonic level
//! and `C` an offset/slope trend. The quadratic program
//!
//! ```text
//! minimize   1/2 |M q + B l + C d - y|^2 + alpha |A q|_1 + lambda/2 |l|^2
//! subject to A q >= 0
//! ```
//!
//! is solved with ADMM on the split `z = A q`. The q-update is a banded
//! solve with a small dense Schur complement for `(l, d)`, so one iteration
//! costs `O(N * knots)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower-triangular Toeplitz matrix with three diagonals (main and two below).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBand3 {
    pub coeffs: [f64; 3],
}

impl LowerBand3 {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let c = self.coeffs;
        (0..x.len())
            .map(|i| {
                let mut s = c[0] * x[i];
                if i >= 1 {
                    s += c[1] * x[i - 1];
                }
                if i >= 2 {
                    s += c[2] * x[i - 2];
                }
                s
            })
            .collect()
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let c = self.coeffs;
        let n = v.len();
        (0..n)
            .map(|j| {
                let mut s = c[0] * v[j];
                if j + 1 < n {
                    s += c[1] * v[j + 1];
                }
                if j + 2 < n {
                    s += c[2] * v[j + 2];
                }
                s
            })
            .collect()
    }

    /// Solves `T x = b` by forward substitution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let c = self.coeffs;
        let mut x = vec![0.0; b.len()];
        for i in 0..b.len() {
            let mut s = b[i];
            if i >= 1 {
                s -= c[1] * x[i - 1];
            }
            if i >= 2 {
                s -= c[2] * x[i - 2];
            }
            x[i] = s / c[0];
        }
        x
    }

    /// Solves `T^T x = b` by back substitution.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let c = self.coeffs;
        let n = b.len();
        let mut x = vec![0.0; n];
        for j in (0..n).rev() {
            let mut s = b[j];
            if j + 1 < n {
                s -= c[1] * x[j + 1];
            }
            if j + 2 < n {
                s -= c[2] * x[j + 2];
            }
            x[j] = s / c[0];
        }
        x
    }

    /// Dense copy, for small problems and tests.
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if i >= j && i - j <= 2 { self.coeffs[i - j] } else { 0.0 })
    }

    /// Bands (diagonal, first and second super-diagonal) of `T^T T`.
    fn gram_bands(&self, n: usize) -> [Vec<f64>; 3] {
        let c = self.coeffs;
        let mut bands = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for r in 0..n {
            for a in 0..3 {
                if a > r {
                    break;
                }
                for b in a..3 {
                    if b > r {
                        break;
                    }
                    // T[r][r-a] * T[r][r-b] contributes to entry (r-b, r-a)
                    bands[b - a][r - b] += c[a] * c[b];
                }
            }
        }
        bands
    }
}

/// Cholesky factor of a symmetric positive-definite pentadiagonal matrix.
#[derive(Debug, Clone)]
struct PentaCholesky {
    l0: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl PentaCholesky {
    fn factor(bands: &[Vec<f64>; 3]) -> Result<Self> {
        let n = bands[0].len();
        let (mut l0, mut l1, mut l2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            if i >= 2 {
                l2[i] = bands[2][i - 2] / l0[i - 2];
            }
            if i >= 1 {
                let mut s = bands[1][i - 1];
                if i >= 2 {
                    s -= l2[i] * l1[i - 1];
                }
                l1[i] = s / l0[i - 1];
            }
            let d = bands[0][i] - l1[i] * l1[i] - l2[i] * l2[i];
            if !(d > 0.0) {
                return Err(Error::Degenerate("banded system is not positive definite".into()));
            }
            l0[i] = d.sqrt();
        }
        Ok(Self { l0, l1, l2 })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            if i >= 1 {
                s -= self.l1[i] * y[i - 1];
            }
            if i >= 2 {
                s -= self.l2[i] * y[i - 2];
            }
            y[i] = s / self.l0[i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            if i + 1 < n {
                s -= self.l1[i + 1] * y[i + 1];
            }
            if i + 2 < n {
                s -= self.l2[i + 2] * y[i + 2];
            }
            y[i] = s / self.l0[i];
        }
        y
    }
}

/// Tonic regressors: cubic B-spline columns plus the `[1, t/N]` trend.
#[derive(Debug, Clone, PartialEq)]
pub struct TonicBasis {
    n: usize,
    /// `(first_row, values)` per spline column.
    splines: Vec<(usize, Vec<f64>)>,
}

impl TonicBasis {
    pub fn new(n: usize, knot_spacing_samples: usize) -> Self {
        let k = knot_spacing_samples.max(1);
        let tri: Vec<f64> = (1..k).chain((1..=k).rev()).map(|v| v as f64).collect();
        let mut spl = vec![0.0; 2 * tri.len() - 1];
        for (i, a) in tri.iter().enumerate() {
            for (j, b) in tri.iter().enumerate() {
                spl[i + j] += a * b;
            }
        }
        let peak = spl.iter().cloned().fold(f64::MIN, f64::max);
        spl.iter_mut().for_each(|v| *v /= peak);
        let half = spl.len() / 2;
        let splines = (0..n)
            .step_by(k)
            .map(|center| {
                let first = center as isize - half as isize;
                let rows: Vec<(usize, f64)> = spl
                    .iter()
                    .enumerate()
                    .filter_map(|(o, &v)| {
                        let r = first + o as isize;
                        (r >= 0 && (r as usize) < n).then_some((r as usize, v))
                    })
                    .collect();
                (rows[0].0, rows.iter().map(|&(_, v)| v).collect())
            })
            .collect();
        Self { n, splines }
    }

    pub fn spline_count(&self) -> usize {
        self.splines.len()
    }

    /// Total number of tonic coefficients (splines plus two trend terms).
    pub fn width(&self) -> usize {
        self.splines.len() + 2
    }

    fn trend(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.n as f64
    }

    /// `B l + C d` with `coef = [l; d]`.
    pub fn apply(&self, coef: &[f64]) -> Vec<f64> {
        let nb = self.splines.len();
        let mut out: Vec<f64> = (0..self.n).map(|i| coef[nb] + coef[nb + 1] * self.trend(i)).collect();
        for ((first, vals), c) in self.splines.iter().zip(coef) {
            for (o, v) in vals.iter().enumerate() {
                out[first + o] += c * v;
            }
        }
        out
    }

    /// `[B C]^T v`.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .splines
            .iter()
            .map(|(first, vals)| vals.iter().zip(&v[*first..]).map(|(a, b)| a * b).sum())
            .collect();
        out.push(v.iter().sum());
        out.push(v.iter().enumerate().map(|(i, x)| x * self.trend(i)).sum());
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let w = self.width();
        let mut m = DMatrix::zeros(self.n, w);
        for (j, (first, vals)) in self.splines.iter().enumerate() {
            for (o, v) in vals.iter().enumerate() {
                m[(first + o, j)] = *v;
            }
        }
        for i in 0..self.n {
            m[(i, w - 2)] = 1.0;
            m[(i, w - 1)] = self.trend(i);
        }
        m
    }

    /// `[B C]^T [B C] + diag(lambda, .., lambda, 0, 0)`.
    fn regularised_gram(&self, lambda: f64) -> DMatrix<f64> {
        let w = self.width();
        let mut g = DMatrix::zeros(w, w);
        for j in 0..w {
            let mut e = vec![0.0; w];
            e[j] = 1.0;
            let col = self.apply_transpose(&self.apply(&e));
            for (i, v) in col.into_iter().enumerate() {
                g[(i, j)] = v;
            }
        }
        for j in 0..self.splines.len() {
            g[(j, j)] += lambda;
        }
        g
    }
}

/// Matrices of the decomposition for one record length and sampling rate.
#[derive(Debug, Clone)]
pub struct EdaModel {
    pub n: usize,
    /// Driver operator (`A`).
    pub driver: LowerBand3,
    /// Response numerator operator (`M`).
    pub response: LowerBand3,
    pub tonic: TonicBasis,
}

impl EdaModel {
    /// Bilinear discretisation of the biexponential (Bateman) impulse
    /// response with time constants `tau0`, `tau1` seconds.
    pub fn new(n: usize, rate_hz: f64, tau0: f64, tau1: f64, knot_spacing_s: f64) -> Result<Self> {
        if !(tau0 > 0.0 && tau1 > 0.0) || (tau0 - tau1).abs() < 1e-12 {
            return Err(Error::invalid("Bateman time constants must be positive and distinct"));
        }
        let delta = 1.0 / rate_hz;
        let a1 = 1.0 / tau0.min(tau1);
        let a0 = 1.0 / tau0.max(tau1);
        let scale = (a1 - a0) * delta * delta;
        let driver = LowerBand3 {
            coeffs: [
                (a1 * delta + 2.0) * (a0 * delta + 2.0) / scale,
                (2.0 * a1 * a0 * delta * delta - 8.0) / scale,
                (a1 * delta - 2.0) * (a0 * delta - 2.0) / scale,
            ],
        };
        let response = LowerBand3 { coeffs: [1.0, 2.0, 1.0] };
        let knot = ((knot_spacing_s * rate_hz).round() as usize).max(1);
        Ok(Self { n, driver, response, tonic: TonicBasis::new(n, knot) })
    }

    /// Objective value at `(q, coef = [l; d])` with the l1 term taken as
    /// `alpha * sum |A q|`.
    pub fn objective(&self, y: &[f64], q: &[f64], coef: &[f64], alpha: f64, lambda: f64) -> f64 {
        let mq = self.response.apply(q);
        let tonic = self.tonic.apply(coef);
        let fit: f64 = (0..self.n).map(|i| (mq[i] + tonic[i] - y[i]).powi(2)).sum();
        let l1: f64 = self.driver.apply(q).iter().map(|v| v.abs()).sum();
        let ridge: f64 = coef[..self.tonic.spline_count()].iter().map(|v| v * v).sum();
        0.5 * fit + alpha * l1 + 0.5 * lambda * ridge
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmSettings {
    pub max_iterations: usize,
    /// Relative tolerance on primal/dual residuals.
    pub tolerance: f64,
    pub rho: Option<f64>,
    pub relaxation: f64,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self { max_iterations: 10_000, tolerance: 1e-6, rho: None, relaxation: 1.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Relative KKT residual of the returned point.
    pub kkt_residual: f64,
    /// Objective of the incumbent feasible point after each iteration.
    pub objective_history: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub q: Vec<f64>,
    /// `[l; d]`: spline coefficients followed by offset and slope.
    pub tonic_coef: Vec<f64>,
    pub report: SolverReport,
}

struct KktSystem<'a> {
    model: &'a EdaModel,
    chol: PentaCholesky,
    schur: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl<'a> KktSystem<'a> {
    fn new(model: &'a EdaModel, rho: f64, lambda: f64) -> Result<Self> {
        let n = model.n;
        let mb = model.response.gram_bands(n);
        let ab = model.driver.gram_bands(n);
        let bands = [0, 1, 2].map(|k| (0..n).map(|i| mb[k][i] + rho * ab[k][i]).collect::<Vec<_>>());
        let chol = PentaCholesky::factor(&bands)?;
        let w = model.tonic.width();
        let mut s = model.tonic.regularised_gram(lambda);
        for j in 0..w {
            let mut e = vec![0.0; w];
            e[j] = 1.0;
            let col = model.response.apply_transpose(&model.tonic.apply(&e));
            let z = chol.solve(&col);
            let back = model.tonic.apply_transpose(&model.response.apply(&z));
            for (i, v) in back.into_iter().enumerate() {
                s[(i, j)] -= v;
            }
        }
        let s = (&s + s.transpose()) * 0.5;
        let schur = s
            .cholesky()
            .ok_or_else(|| Error::Degenerate("tonic Schur complement is not positive definite".into()))?;
        Ok(Self { model, chol, schur })
    }

    /// Solves the x-update system for right-hand side `(rq, rb)`.
    fn solve(&self, rq: &[f64], rb: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.model;
        let t = self.chol.solve(rq);
        let coupling = m.tonic.apply_transpose(&m.response.apply(&t));
        let rhs = DVector::from_iterator(rb.len(), rb.iter().zip(&coupling).map(|(a, b)| a - b));
        let xb = self.schur.solve(&rhs);
        let xb: Vec<f64> = xb.iter().copied().collect();
        let back = self.chol.solve(&m.response.apply_transpose(&m.tonic.apply(&xb)));
        let xq = t.iter().zip(&back).map(|(a, b)| a - b).collect();
        (xq, xb)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Best tonic coefficients for a fixed phasic part.
fn refit_tonic(model: &EdaModel, y: &[f64], q: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let mq = model.response.apply(q);
    let target: Vec<f64> = y.iter().zip(&mq).map(|(a, b)| a - b).collect();
    let rhs = DVector::from_vec(model.tonic.apply_transpose(&target));
    let chol = model
        .tonic
        .regularised_gram(lambda)
        .cholesky()
        .ok_or_else(|| Error::Degenerate("tonic Gram matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs).iter().copied().collect())
}

/// Relative KKT residual in driver coordinates `p = A q`.
pub fn kkt_residual(model: &EdaModel, y: &[f64], q: &[f64], coef: &[f64], alpha: f64, lambda: f64) -> f64 {
    let p = model.driver.apply(q);
    let mq = model.response.apply(q);
    let tonic = model.tonic.apply(coef);
    let res: Vec<f64> = (0..model.n).map(|i| mq[i] + tonic[i] - y[i]).collect();
    let grad_p: Vec<f64> = model
        .driver
        .solve_transpose(&model.response.apply_transpose(&res))
        .into_iter()
        .map(|g| g + alpha)
        .collect();
    let comp: Vec<f64> = p.iter().zip(&grad_p).map(|(pi, gi)| pi.min(*gi)).collect();
    let mut grad_b = model.tonic.apply_transpose(&res);
    for (g, c) in grad_b.iter_mut().zip(coef).take(model.tonic.spline_count()) {
        *g += lambda * c;
    }
    let scale = 1.0 + norm(y) + alpha * (model.n as f64).sqrt();
    (norm(&comp) + norm(&grad_b)) / scale
}

/// ADMM solve of the decomposition QP.
pub fn solve_qp(model: &EdaModel, y: &[f64], alpha: f64, lambda: f64, settings: &AdmmSettings) -> Result<QpSolution> {
    let n = model.n;
    if y.len() != n {
        return Err(Error::invalid(format!("expected {n} samples, got {}", y.len())));
    }
    let a = model.driver;
    // Balance rho so the driver penalty is on the scale of the fit term.
    let a_scale: f64 = a.coeffs.iter().map(|c| c * c).sum();
    let m_scale: f64 = model.response.coeffs.iter().map(|c| c * c).sum();
    let mut rho = settings.rho.unwrap_or(m_scale / a_scale);
    let mut system = KktSystem::new(model, rho, lambda)?;

    let my = model.response.apply_transpose(y);
    let by = model.tonic.apply_transpose(y);
    let mut z = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut coef = vec![0.0; model.tonic.width()];

    let feasible_objective = |z: &[f64], coef: &[f64]| {
        let qf = a.solve(z);
        model.objective(y, &qf, coef, alpha, lambda)
    };
    let mut best = feasible_objective(&z, &coef);
    let mut best_z = z.clone();
    let mut history = Vec::new();
    let sqrt_n = (n as f64).sqrt();
    let abs_tol = settings.tolerance * 1e-3 * (1.0 + norm(y) / sqrt_n);
    let (mut r_norm, mut s_norm) = (f64::INFINITY, f64::INFINITY);
    let mut last_rescale = 0;

    for it in 1..=settings.max_iterations {
        let zu: Vec<f64> = z.iter().zip(&u).map(|(zi, ui)| zi - ui).collect();
        let at_zu = a.apply_transpose(&zu);
        let rq: Vec<f64> = my.iter().zip(&at_zu).map(|(m, v)| m + rho * v).collect();
        let (xq, xb) = system.solve(&rq, &by);
        q = xq;
        coef = xb;

        let aq = a.apply(&q);
        let relaxed: Vec<f64> = aq
            .iter()
            .zip(&z)
            .map(|(v, zi)| settings.relaxation * v + (1.0 - settings.relaxation) * zi)
            .collect();
        let z_prev = std::mem::take(&mut z);
        z = relaxed.iter().zip(&u).map(|(v, ui)| (v + ui - alpha / rho).max(0.0)).collect();
        for i in 0..n {
            u[i] += relaxed[i] - z[i];
        }

        let f = feasible_objective(&z, &coef);
        if f < best {
            best = f;
            best_z.clone_from(&z);
        }
        history.push(best);

        r_norm = norm(&aq.iter().zip(&z).map(|(v, zi)| v - zi).collect::<Vec<_>>());
        let dz: Vec<f64> = z.iter().zip(&z_prev).map(|(a, b)| a - b).collect();
        s_norm = rho * norm(&a.apply_transpose(&dz));
        let eps_pri = sqrt_n * abs_tol + settings.tolerance * norm(&aq).max(norm(&z));
        let eps_dual = sqrt_n * abs_tol + settings.tolerance * rho * norm(&a.apply_transpose(&u));
        if r_norm <= eps_pri && s_norm <= eps_dual {
            log::debug!("ADMM converged after {it} iterations, objective {best:.6e}");
            return finish(model, y, alpha, lambda, &best_z, it, r_norm, s_norm, history);
        }

        // Residual balancing; the factorisation is rebuilt, so only rarely.
        if settings.rho.is_none() && it - last_rescale >= 50 {
            let ratio = (r_norm / eps_pri.max(1e-300)) / (s_norm / eps_dual.max(1e-300)).max(1e-300);
            let factor = if ratio > 10.0 {
                ratio.sqrt().min(50.0)
            } else if ratio < 0.1 {
                1.0 / (1.0 / ratio).sqrt().min(50.0)
            } else {
                1.0
            };
            if factor != 1.0 {
                rho *= factor;
                for v in u.iter_mut() {
                    *v /= factor;
                }
                system = KktSystem::new(model, rho, lambda)?;
                last_rescale = it;
            }
        }
    }
    Err(Error::NoConvergence { iterations: settings.max_iterations, residual: r_norm.max(s_norm) })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    model: &EdaModel,
    y: &[f64],
    alpha: f64,
    lambda: f64,
    z: &[f64],
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
    mut history: Vec<f64>,
) -> Result<QpSolution> {
    // Exact feasibility: q = A^-1 z with z >= 0, then the tonic part is
    // re-solved given q, which can only lower the objective.
    let q = model.driver.solve(z);
    let tonic_coef = refit_tonic(model, y, &q, lambda)?;
    let objective = model.objective(y, &q, &tonic_coef, alpha, lambda);
    let last = history.last().copied().unwrap_or(f64::INFINITY);
    if objective < last {
        history.push(objective);
    }
    let kkt = kkt_residual(model, y, &q, &tonic_coef, alpha, lambda);
    Ok(QpSolution {
        q,
        tonic_coef,
        report: SolverReport {
            iterations,
            primal_residual,
            dual_residual,
            kkt_residual: kkt,
            objective_history: history,
            objective: objective.min(last),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_ops_match_dense() {
        let t = LowerBand3 { coeffs: [2.0, -3.0, 0.5] };
        let n = 7;
        let d = t.to_dense(n);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let dx = &d * DVector::from_vec(x.clone());
        let ax = t.apply(&x);
        let atx = t.apply_transpose(&x);
        let dtx = d.transpose() * DVector::from_vec(x.clone());
        for i in 0..n {
            assert!((dx[i] - ax[i]).abs() < 1e-12);
            assert!((dtx[i] - atx[i]).abs() < 1e-12);
        }
        let back = t.apply(&t.solve(&x));
        let back_t = t.apply_transpose(&t.solve_transpose(&x));
        for i in 0..n {
            assert!((back[i] - x[i]).abs() < 1e-9);
            assert!((back_t[i] - x[i]).abs() < 1e-9);
        }
        let g = t.gram_bands(n);
        let dense_g = d.transpose() * &d;
        for i in 0..n {
            for k in 0..3 {
                if i + k < n {
                    assert!((g[k][i] - dense_g[(i, i + k)]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn spline_basis_shape() {
        let basis = TonicBasis::new(100, 10);
        assert_eq!(basis.spline_count(), 10);
        let dense = basis.to_dense();
        // cubic B-spline: support 4 knot intervals, unit peak at its knot
        assert!((dense[(30, 3)] - 1.0).abs() < 1e-12);
        assert!(dense[(30 + 18, 3)] > 0.0);
        assert_eq!(dense[(30 + 19, 3)], 0.0);
        let coef: Vec<f64> = (0..basis.width()).map(|i| i as f64 * 0.1 - 0.3).collect();
        let fast = basis.apply(&coef);
        let slow = &dense * DVector::from_vec(coef);
        for i in 0..100 {
            assert!((fast[i] - slow[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn driver_dc_gain_matches_bateman() {
        // Bilinear maps DC to z = 1, so M(1)/A(1) equals the continuous gain.
        let m = EdaModel::new(50, 4.0, 2.0, 0.7, 10.0).unwrap();
        let a1: f64 = 1.0 / 0.7;
        let a0: f64 = 0.5;
        let dc = 4.0 / m.driver.coeffs.iter().sum::<f64>();
        assert!((dc - (a1 - a0) / (a1 * a0)).abs() < 1e-12);
    }
}
