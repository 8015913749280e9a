//! Partial correlation read off the inverse covariance matrix.

use nalgebra::DMatrix;

pub fn precision_oracle(x: &[f64], y: &[f64], controls: &[Vec<f64>]) -> f64 {
    let mut vars: Vec<&[f64]> = vec![x, y];
    vars.extend(controls.iter().map(|c| c.as_slice()));
    let k = vars.len();
    let n = x.len() as f64;
    let mean: Vec<f64> = vars.iter().map(|v| v.iter().sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(k, k, |a, b| vars[a].iter().zip(vars[b]).map(|(u, v)| (u - mean[a]) * (v - mean[b])).sum::<f64>());
    let p = cov.try_inverse().unwrap();
    -p[(0, 1)] / (p[(0, 0)] * p[(1, 1)]).sqrt()
}
