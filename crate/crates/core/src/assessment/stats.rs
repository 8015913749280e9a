//! Pearson and partial correlation with t-test significance, min-max
//! normalisation and correlation tables.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Two-sided p-value of a correlation `r` with `df` degrees of freedom.
pub fn correlation_p_value(r: f64, df: f64) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - m).collect()
}

fn raw_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let (a, b) = (centered(a), centered(b));
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|x| x * x).sum();
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    let sab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation and its two-sided p-value (n − 2 degrees of freedom).
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::invalid("correlation inputs differ in length"));
    }
    if x.len() < 3 {
        return Err(Error::TooShort { needed: 3, got: x.len() });
    }
    let r = raw_correlation(x, y).ok_or_else(|| Error::Degenerate("constant input to correlation".into()))?;
    Ok((r, correlation_p_value(r, x.len() as f64 - 2.0)))
}

/// Residual of least-squares regression of `v` on an intercept and
/// `controls`, or `None` when the design is rank deficient.
fn residualize(v: &[f64], design: &DMatrix<f64>) -> Result<Vec<f64>> {
    let svd = design.clone().svd(true, true);
    let b = DVector::from_column_slice(v);
    let coef = svd.solve(&b, 1e-12).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok((b - design * coef).iter().copied().collect())
}

/// Correlation of `x` and `y` after removing their linear dependence on the
/// control columns; p-value with n − 2 − k degrees of freedom.
pub fn partial_correlation(x: &[f64], y: &[f64], controls: &[Vec<f64>]) -> Result<(f64, f64)> {
    let n = x.len();
    let k = controls.len();
    if y.len() != n || controls.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("partial correlation inputs differ in length"));
    }
    if k == 0 {
        return pearson_r(x, y);
    }
    if n < k + 3 {
        return Err(Error::TooShort { needed: k + 3, got: n });
    }
    let design = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { controls[j - 1][i] });
    let sv = design.clone().svd(false, false).singular_values;
    let top = sv.max();
    if sv.iter().filter(|s| **s > 1e-10 * top).count() < k + 1 {
        return Err(Error::Degenerate("control columns are rank deficient".into()));
    }
    let rx = residualize(x, &design)?;
    let ry = residualize(y, &design)?;
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let df = (n - 2 - k) as f64;
    // a variable fully explained by the controls has no partial correlation
    if norm(&rx) <= 1e-10 * norm(&centered(x)).max(f64::MIN_POSITIVE) || norm(&ry) <= 1e-10 * norm(&centered(y)).max(f64::MIN_POSITIVE) {
        return Ok((0.0, 1.0));
    }
    let r = raw_correlation(&rx, &ry).unwrap_or(0.0);
    Ok((r, correlation_p_value(r, df)))
}

/// `(x − min) / (max − min)`; a constant input maps to 0.5 and reports
/// `false`.
pub fn min_max_normalize(values: &[f64]) -> (Vec<f64>, bool) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return (vec![0.5; values.len()], false);
    }
    (values.iter().map(|x| ((x - lo) / (hi - lo)).clamp(0.0, 1.0)).collect(), true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// `None` where a correlation is undefined (constant input).
    pub r: Vec<Vec<Option<f64>>>,
    pub p: Vec<Vec<Option<f64>>>,
}

impl CorrelationTable {
    /// Pearson (no controls) or partial correlation of every row variable
    /// with every column variable.
    pub fn build(rows: &[(String, Vec<f64>)], columns: &[(String, Vec<f64>)], controls: &[Vec<f64>]) -> Self {
        let mut r = Vec::new();
        let mut p = Vec::new();
        for (_, x) in rows {
            let (rr, pp): (Vec<_>, Vec<_>) = columns
                .iter()
                .map(|(_, y)| match partial_correlation(x, y, controls) {
                    Ok((a, b)) => (Some(a), Some(b)),
                    Err(_) => (None, None),
                })
                .unzip();
            r.push(rr);
            p.push(pp);
        }
        Self { rows: rows.iter().map(|(n, _)| n.clone()).collect(), columns: columns.iter().map(|(n, _)| n.clone()).collect(), r, p }
    }

    /// Writes `row,column,r,p` rows; undefined cells are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "row,column,r,p")?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (i, row) in self.rows.iter().enumerate() {
            for (j, col) in self.columns.iter().enumerate() {
                writeln!(out, "{row},{col},{},{}", cell(self.r[i][j]), cell(self.p[i][j]))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_lines() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let yn: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &y2).unwrap().0 - 1.0).abs() < 1e-12);
        assert!((pearson_r(&x, &yn).unwrap().0 + 1.0).abs() < 1e-12);
        assert_eq!(pearson_r(&x, &y2).unwrap().1, 0.0);
    }

    #[test]
    fn hand_case() {
        let (r, _) = pearson_r(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn constant_rejected() {
        assert!(pearson_r(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson_r(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn p_value_of_zero_correlation_is_one() {
        assert!((correlation_p_value(0.0, 10.0) - 1.0).abs() < 1e-12);
        // r = 0.8 with 2 degrees of freedom: t = 0.8 * sqrt(2 / 0.36), p = 0.2
        assert!((correlation_p_value(0.8, 2.0) - 0.2).abs() < 1e-9);
    }

    #[test]
    fn target_equal_to_control() {
        let c = vec![1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let x = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
        let (r, _) = partial_correlation(&x, &c, &[c.clone()]).unwrap();
        assert!(r.abs() < 1e-9);
    }

    #[test]
    fn rank_deficient_controls_rejected() {
        let c = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let d: Vec<f64> = c.iter().map(|v| 2.0 * v + 1.0).collect();
        let x = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
        assert!(partial_correlation(&x, &x, &[c, d]).is_err());
    }

    #[test]
    fn min_max() {
        assert_eq!(min_max_normalize(&[0.0, 5.0, 10.0]).0, vec![0.0, 0.5, 1.0]);
        assert_eq!(min_max_normalize(&[3.0, 3.0]), (vec![0.5, 0.5], false));
    }
}
