mod common;

use cogassess::eda::cvx::{solve_qp, AdmmSettings};
use cogassess::eda::{cvx_decompose, swt_denoise, swt_forward, swt_inverse};
use cogassess::signal::TimeSeries;
use common::eda_oracle::{oracle_objective, planted_instance};
use proptest::prelude::*;

#[test]
fn admm_matches_barrier_oracle() {
    for seed in 0..6 {
        let inst = planted_instance(seed, 120 + 16 * seed as usize, 0.02);
        let sol = solve_qp(&inst.model, &inst.y, 8e-4, 1e-2, &AdmmSettings::default()).unwrap();
        let reference = oracle_objective(&inst.model, &inst.y, 8e-4, 1e-2);
        let rel = (sol.report.objective - reference).abs() / reference.abs();
        assert!(rel <= 1e-4, "seed {seed}: admm {} oracle {reference} rel {rel:e}", sol.report.objective);
        let p = inst.model.driver.apply(&sol.q);
        assert!(p.iter().all(|&v| v >= -1e-8));
        let hist = &sol.report.objective_history;
        assert!(hist.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn planted_impulses_recovered() {
    for seed in 10..14 {
        let inst = planted_instance(seed, 200, 0.0);
        let y = TimeSeries::new(inst.y.clone(), 4.0, 0.0).unwrap();
        let dec = cvx_decompose(&y, 8e-4, 1e-2).unwrap();
        let total: f64 = dec.driver.iter().map(|v| v.abs()).sum();
        let near = |i: usize| inst.true_impulses.iter().any(|&t| i.abs_diff(t) <= 1);
        let spurious: f64 = dec.driver.iter().enumerate().filter(|(i, _)| !near(*i)).map(|(_, v)| v.abs()).sum();
        assert!(spurious < 0.1 * total, "seed {seed}: spurious {spurious} of {total}");
        for &t in &inst.true_impulses {
            let local: f64 = dec.driver[t.saturating_sub(1)..=(t + 1)].iter().sum();
            assert!(local > 0.0, "seed {seed}: no mass at {t}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decomposition_identity_and_feasibility(seed in 0u64..1000, n in 40usize..160, noise in 0.0f64..0.05) {
        let inst = planted_instance(seed, n.max(48), noise);
        let y = TimeSeries::new(inst.y, 4.0, 0.0).unwrap();
        let dec = cvx_decompose(&y, 8e-4, 1e-2).unwrap();
        for i in 0..y.len() {
            let sum = dec.tonic.samples()[i] + dec.phasic.samples()[i] + dec.residual.samples()[i];
            prop_assert!((sum - y.samples()[i]).abs() <= 1e-5);
        }
        prop_assert!(dec.driver.iter().all(|&v| v >= -1e-8));
    }

    #[test]
    fn swt_round_trip(x in prop::collection::vec(-100.0f64..100.0, 2..300), levels in 1usize..6) {
        let ts = TimeSeries::new(x.clone(), 4.0, 0.0).unwrap();
        prop_assume!(levels <= (x.len() as f64).log2().floor() as usize);
        let back = swt_inverse(&swt_forward(&ts, levels).unwrap()).unwrap();
        for (a, b) in x.iter().zip(back.samples()) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn swt_denoise_nearly_idempotent(seed in 0u64..500) {
        let inst = planted_instance(seed, 240, 0.01);
        let ts = TimeSeries::new(inst.y, 4.0, 0.0).unwrap();
        let once = swt_denoise(&ts).unwrap();
        let twice = swt_denoise(&once).unwrap();
        let n = once.len() as f64;
        let rmse = (once.samples().iter().zip(twice.samples()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt();
        let scale = (once.samples().iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        prop_assert!(rmse <= 0.01 * scale, "rmse {} scale {}", rmse, scale);
    }
}
