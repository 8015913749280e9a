//! Dense reference solvers for small convex problems.

/// `min 1/2 a^T Q a - 1^T a` s.t. `y^T a = 0`, `0 <= a <= c`, by accelerated
/// projected gradient with exact projection (bisection on the multiplier).
pub fn svm_dual(q: &[Vec<f64>], y: &[f64], c: f64, iterations: usize) -> (Vec<f64>, f64) {
    let n = y.len();
    let lip = power_norm(q).max(1e-12);
    let grad = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| q[i].iter().zip(a).map(|(x, v)| x * v).sum::<f64>() - 1.0).collect() };
    let obj = |a: &[f64]| -> f64 {
        let g = grad(a);
        (0..n).map(|i| 0.5 * a[i] * (g[i] + 1.0) - a[i]).sum()
    };
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    for _ in 0..iterations {
        let g = grad(&z);
        let v: Vec<f64> = (0..n).map(|i| z[i] - g[i] / lip).collect();
        let next = project(&v, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let uphill: f64 = (0..n).map(|i| (z[i] - next[i]) * (next[i] - x[i])).sum();
        if uphill > 0.0 {
            t = 1.0;
            z = next.clone();
        } else {
            z = (0..n).map(|i| next[i] + (t - 1.0) / t_next * (next[i] - x[i])).collect();
            t = t_next;
        }
        x = next;
    }
    let f = obj(&x);
    (x, f)
}

fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> { v.iter().zip(y).map(|(a, b)| (a - mu * b).clamp(0.0, c)).collect() };
    let g = |mu: f64| -> f64 { at(mu).iter().zip(y).map(|(a, b)| a * b).sum() };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) < 0.0 {
        lo *= 2.0;
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

fn power_norm(q: &[Vec<f64>]) -> f64 {
    let n = q.len();
    let mut v = vec![1.0; n];
    let mut est = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..n).map(|i| q[i].iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nw == 0.0 {
            return 0.0;
        }
        est = nw / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / nw).collect();
    }
    est * 1.05
}

/// `min 1/2 |H x - y|^2 + lambda |x|_1` for an explicit matrix `H`, by
/// cyclic coordinate descent.
pub fn lasso_cd(h: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
    let (m, n) = (h.len(), h[0].len());
    let col_sq: Vec<f64> = (0..n).map(|j| (0..m).map(|i| h[i][j] * h[i][j]).sum()).collect();
    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = y.to_vec();
    for _ in 0..100_000 {
        let mut biggest = 0.0f64;
        for j in 0..n {
            if col_sq[j] == 0.0 {
                continue;
            }
            let rho: f64 = (0..m).map(|i| h[i][j] * r[i]).sum::<f64>() + col_sq[j] * x[j];
            let new = rho.signum() * (rho.abs() - lambda).max(0.0) / col_sq[j];
            let d = new - x[j];
            if d != 0.0 {
                for i in 0..m {
                    r[i] -= h[i][j] * d;
                }
                x[j] = new;
                biggest = biggest.max(d.abs());
            }
        }
        if biggest < 1e-13 {
            break;
        }
    }
    x
}
