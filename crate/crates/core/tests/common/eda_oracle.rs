//! Dense log-barrier interior-point solver for the decomposition QP, written
//! in driver coordinates `p = A q` so the only constraints are `p >= 0`.

use cogassess::eda::EdaModel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimises `1/2 x^T H x + c^T x` over `x[..k] >= 0`.
pub fn barrier_qp(h: &DMatrix<f64>, c: &DVector<f64>, k: usize) -> DVector<f64> {
    let n = c.len();
    let mut x = DVector::zeros(n);
    for i in 0..k {
        x[i] = 1.0;
    }
    let obj = |x: &DVector<f64>| 0.5 * x.dot(&(h * x)) + c.dot(x);
    let mut t = 1.0;
    loop {
        for _ in 0..200 {
            let mut g = (h * &x + c) * t;
            let mut hess = h * t;
            for i in 0..k {
                g[i] -= 1.0 / x[i];
                hess[(i, i)] += 1.0 / (x[i] * x[i]);
            }
            let step = match hess.clone().cholesky() {
                Some(ch) => -ch.solve(&g),
                None => -hess.lu().solve(&g).expect("singular Newton system"),
            };
            let decrement = -g.dot(&step);
            if decrement / 2.0 < 1e-12 {
                break;
            }
            let phi = |x: &DVector<f64>| t * obj(x) - (0..k).map(|i| x[i].ln()).sum::<f64>();
            let f0 = phi(&x);
            let mut s = 1.0;
            while (0..k).any(|i| x[i] + s * step[i] <= 0.0) {
                s *= 0.5;
            }
            while phi(&(&x + &step * s)) > f0 - 0.25 * s * decrement && s > 1e-16 {
                s *= 0.5;
            }
            x += &step * s;
        }
        if (k as f64) / t < 1e-11 * obj(&x).abs().max(1e-3) {
            return x;
        }
        t *= 8.0;
    }
}

pub struct Instance {
    pub model: EdaModel,
    pub y: Vec<f64>,
    pub true_impulses: Vec<usize>,
}

/// `y = M q + B l + C d` plus optional noise, with three driver impulses.
pub fn planted_instance(seed: u64, n: usize, noise: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = EdaModel::new(n, 4.0, 2.0, 0.7, 10.0).unwrap();
    let mut p = vec![0.0; n];
    let mut true_impulses = Vec::new();
    let span = (n - 16) / 3;
    for k in 0..3 {
        let at = 4 + k * span + rng.random_range(0..span.saturating_sub(8).max(1));
        p[at] = rng.random_range(0.5..1.5);
        true_impulses.push(at);
    }
    let q = model.driver.solve(&p);
    let mq = model.response.apply(&q);
    let mut coef: Vec<f64> = (0..model.tonic.spline_count()).map(|_| rng.random_range(-0.2..0.2)).collect();
    coef.push(rng.random_range(1.0..5.0));
    coef.push(rng.random_range(-0.5..0.5));
    let tonic = model.tonic.apply(&coef);
    let y = (0..n).map(|i| mq[i] + tonic[i] + noise * rng.random_range(-1.0..1.0)).collect();
    Instance { model, y, true_impulses }
}

/// Optimal objective value from the barrier solver.
pub fn oracle_objective(model: &EdaModel, y: &[f64], alpha: f64, lambda: f64) -> f64 {
    let n = model.n;
    let a = model.driver.to_dense(n);
    let m = model.response.to_dense(n);
    let g = &m * a.clone().lu().try_inverse().unwrap();
    let w = model.tonic.to_dense();
    let width = w.ncols();
    let mut k = DMatrix::zeros(n, n + width);
    k.view_mut((0, 0), (n, n)).copy_from(&g);
    k.view_mut((0, n), (n, width)).copy_from(&w);
    let mut h = k.transpose() * &k;
    for j in 0..model.tonic.spline_count() {
        h[(n + j, n + j)] += lambda;
    }
    let yv = DVector::from_column_slice(y);
    let mut c = -(k.transpose() * &yv);
    for i in 0..n {
        c[i] += alpha;
    }
    let x = barrier_qp(&h, &c, n);
    0.5 * x.dot(&(&h * &x)) + c.dot(&x) + 0.5 * yv.dot(&yv)
}
