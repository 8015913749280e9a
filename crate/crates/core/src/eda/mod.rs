//! Electrodermal activity: artifact removal, tonic/phasic decomposition and
//! skin-conductance-response features.

pub mod cvx;
pub mod features;
pub mod swt;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{butterworth_lowpass, hanning_smooth, TimeSeries};

pub use cvx::{AdmmSettings, EdaModel, SolverReport};
pub use features::{extract_eda_features, EdaFeatures};
pub use swt::{swt_denoise, swt_forward, swt_inverse, SwtDecomposition};

pub const MIN_DECOMPOSE_LEN: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdaConfig {
    pub alpha: f64,
    pub lambda_reg: f64,
    pub tau0_s: f64,
    pub tau1_s: f64,
    pub knot_spacing_s: f64,
    pub scr_threshold_us: f64,
    /// Run wavelet artifact removal before decomposing.
    pub denoise: bool,
    /// Low-pass and smooth the phasic part after decomposing.
    pub phasic_cleanup: bool,
    pub phasic_cutoff_hz: f64,
    pub phasic_order: usize,
    pub hanning_len: usize,
    pub solver: AdmmSettings,
}

impl Default for EdaConfig {
    fn default() -> Self {
        Self {
            alpha: 8e-4,
            lambda_reg: 1e-2,
            tau0_s: 2.0,
            tau1_s: 0.7,
            knot_spacing_s: 10.0,
            scr_threshold_us: 0.01,
            denoise: true,
            phasic_cleanup: true,
            phasic_cutoff_hz: 5.0,
            phasic_order: 5,
            hanning_len: 4,
            solver: AdmmSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaDecomposition {
    pub y: TimeSeries,
    pub tonic: TimeSeries,
    pub phasic: TimeSeries,
    pub residual: TimeSeries,
    pub q: Vec<f64>,
    /// Sudomotor driver `A q`.
    pub driver: Vec<f64>,
    pub l: Vec<f64>,
    /// Offset and slope of the linear trend.
    pub d: [f64; 2],
    pub alpha: f64,
    pub lambda_reg: f64,
    pub report: Option<SolverReport>,
}

impl EdaDecomposition {
    /// Writes `t_s,tonic,phasic,residual` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t_s,tonic,phasic,residual")?;
        for i in 0..self.y.len() {
            writeln!(
                out,
                "{:.6},{:.9},{:.9},{:.9}",
                self.y.time_of(i),
                self.tonic.samples()[i],
                self.phasic.samples()[i],
                self.residual.samples()[i]
            )?;
        }
        Ok(())
    }
}

/// Decomposes `y` with the given `alpha`/`lambda_reg` and default model
/// constants.
pub fn cvx_decompose(y: &TimeSeries, alpha: f64, lambda_reg: f64) -> Result<EdaDecomposition> {
    let cfg = EdaConfig { alpha, lambda_reg, ..EdaConfig::default() };
    decompose_with(y, &cfg)
}

pub fn decompose_with(y: &TimeSeries, cfg: &EdaConfig) -> Result<EdaDecomposition> {
    let n = y.len();
    if n < MIN_DECOMPOSE_LEN {
        return Err(Error::TooShort { needed: MIN_DECOMPOSE_LEN, got: n });
    }
    if !(cfg.alpha > 0.0 && cfg.lambda_reg > 0.0) {
        return Err(Error::invalid("alpha and lambda_reg must be positive"));
    }
    let model = EdaModel::new(n, y.rate_hz(), cfg.tau0_s, cfg.tau1_s, cfg.knot_spacing_s)?;
    let ys = y.samples();
    let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        let zeros = vec![0.0; n];
        let mut d = [ys[0], 0.0];
        if ys[0] == 0.0 {
            d[0] = 0.0;
        }
        return Ok(EdaDecomposition {
            y: y.clone(),
            tonic: y.clone(),
            phasic: y.with_samples(zeros.clone())?,
            residual: y.with_samples(zeros.clone())?,
            q: zeros.clone(),
            driver: zeros,
            l: vec![0.0; model.tonic.spline_count()],
            d,
            alpha: cfg.alpha,
            lambda_reg: cfg.lambda_reg,
            report: None,
        });
    }

    let sol = cvx::solve_qp(&model, ys, cfg.alpha, cfg.lambda_reg, &cfg.solver)?;
    let tonic = model.tonic.apply(&sol.tonic_coef);
    let detrended = y.with_samples(ys.iter().zip(&tonic).map(|(a, b)| a - b).collect())?;
    let phasic = if cfg.phasic_cleanup { clean_phasic(&detrended, cfg)? } else { detrended.clone() };
    let residual: Vec<f64> = detrended.samples().iter().zip(phasic.samples()).map(|(a, b)| a - b).collect();
    let nb = model.tonic.spline_count();
    Ok(EdaDecomposition {
        y: y.clone(),
        tonic: y.with_samples(tonic)?,
        phasic,
        residual: y.with_samples(residual)?,
        driver: model.driver.apply(&sol.q),
        q: sol.q,
        l: sol.tonic_coef[..nb].to_vec(),
        d: [sol.tonic_coef[nb], sol.tonic_coef[nb + 1]],
        alpha: cfg.alpha,
        lambda_reg: cfg.lambda_reg,
        report: Some(sol.report),
    })
}

fn clean_phasic(x: &TimeSeries, cfg: &EdaConfig) -> Result<TimeSeries> {
    let cutoff = cfg.phasic_cutoff_hz.min(0.45 * x.rate_hz());
    let filtered = butterworth_lowpass(x, cutoff, cfg.phasic_order)?;
    if cfg.hanning_len >= 2 && cfg.hanning_len <= x.len() {
        hanning_smooth(&filtered, cfg.hanning_len)
    } else {
        Ok(filtered)
    }
}

/// Full EDA chain for one record: optional wavelet cleanup, then decomposition.
pub fn process_eda(raw: &TimeSeries, cfg: &EdaConfig) -> Result<EdaDecomposition> {
    let y = if cfg.denoise { swt_denoise(raw)? } else { raw.clone() };
    decompose_with(&y, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_input() {
        let y = TimeSeries::new(vec![0.0; 80], 4.0, 0.0).unwrap();
        let dec = cvx_decompose(&y, 8e-4, 1e-2).unwrap();
        assert!(dec.tonic.samples().iter().all(|&v| v == 0.0));
        assert!(dec.phasic.samples().iter().all(|&v| v == 0.0));
        assert!(dec.q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_trend_goes_to_tonic() {
        let y: Vec<f64> = (0..240).map(|i| 1.0 + 0.01 * i as f64 / 4.0).collect();
        let y = TimeSeries::new(y, 4.0, 0.0).unwrap();
        let dec = cvx_decompose(&y, 8e-4, 1e-2).unwrap();
        let r = dec.phasic.samples();
        let rmse = (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
        assert!(rmse < 0.01, "phasic rmse {rmse}");
        let sum: Vec<f64> = (0..240)
            .map(|i| dec.tonic.samples()[i] + dec.phasic.samples()[i] + dec.residual.samples()[i])
            .collect();
        assert!(max_abs_diff(&sum, y.samples()) <= 1e-9);
    }

    #[test]
    fn too_short_rejected() {
        let y = TimeSeries::new(vec![1.0; 39], 4.0, 0.0).unwrap();
        assert!(matches!(cvx_decompose(&y, 8e-4, 1e-2), Err(Error::TooShort { .. })));
    }

    #[test]
    fn csv_export() {
        let y = TimeSeries::new(vec![2.0; 40], 4.0, 10.0).unwrap();
        let dec = cvx_decompose(&y, 8e-4, 1e-2).unwrap();
        let mut buf = Vec::new();
        dec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 41);
        assert!(text.lines().nth(1).unwrap().starts_with("10.000000,2.0"));
    }
}
