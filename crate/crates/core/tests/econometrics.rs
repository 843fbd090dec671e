use std::collections::BTreeMap;

use carrygap_core::econometrics::{
    clustered_covariance, design_matrix, fit_ols, run_loyo, run_loyo_with, sign_table,
    spec_rows, LoyoReport, PanelRow, Regressor, Scope, SignCount, Spec, MIN_BIN_ROWS,
};
use carrygap_core::synthgen::{gen_regression_panel, PlantedPanelSpec};
use carrygap_core::Benchmark;
use carrygap_testkit::{
    cluster_covariance, gram, hc1_covariance, invert, normal_equations, residuals,
};
use chrono::Datelike;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn panel(seed: u64, noise: f64, years: u32) -> Vec<PanelRow> {
    panel_sized(seed, noise, years, 2)
}

fn panel_sized(seed: u64, noise: f64, years: u32, rows_per_day: usize) -> Vec<PanelRow> {
    let mut s = PlantedPanelSpec::table2(seed);
    s.years = years;
    s.rows_per_day = rows_per_day;
    s.day_stride = 5;
    s.noise_sd_bp = noise;
    gen_regression_panel(&s).unwrap().rows
}

fn dense(rows: &[PanelRow], spec: Spec) -> (Vec<Vec<f64>>, Vec<f64>) {
    let sample = spec_rows(rows, spec);
    let x = sample
        .iter()
        .map(|r| spec.regressors().iter().map(|g| g.value(r)).collect())
        .collect();
    (x, sample.iter().map(|r| r.cg_bp).collect())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn coefficients_match_normal_equations() {
    let rows = panel_sized(1, 13.57, 3, 4);
    assert!(rows.len() >= 1000);
    for spec in Spec::ALL {
        let fit = fit_ols(&rows, spec, Benchmark::Ois).unwrap();
        let (x, y) = dense(&rows, spec);
        let beta = normal_equations(&x, &y);
        for (t, b) in fit.terms.iter().zip(&beta) {
            assert!(close(t.estimate, *b, 1e-8), "{}: {} vs {b}", t.regressor, t.estimate);
        }
    }
}

#[test]
fn clustered_covariance_matches_sandwich_oracle() {
    let rows = panel(2, 13.57, 3);
    let fit = fit_ols(&rows, Spec::Pooled, Benchmark::Ois).unwrap();
    let (x, y) = dense(&rows, Spec::Pooled);
    let beta = normal_equations(&x, &y);
    let e = residuals(&x, &y, &beta);
    let labels: Vec<u64> = rows.iter().map(|r| r.date.num_days_from_ce() as u64).collect();
    let want = cluster_covariance(&x, &e, &labels);
    let got = fit.covariance.as_ref().unwrap();
    for (gr, wr) in got.iter().zip(&want) {
        for (g, w) in gr.iter().zip(wr) {
            assert!(close(*g, *w, 1e-8), "{g} vs {w}");
        }
    }
}

#[test]
fn singleton_clusters_reduce_to_hc1() {
    let rows = panel(3, 13.57, 3);
    let sample: Vec<&PanelRow> = rows.iter().collect();
    let x = design_matrix(&sample, Spec::Pooled.regressors());
    let (xd, y) = dense(&rows, Spec::Pooled);
    let beta = normal_equations(&xd, &y);
    let e = residuals(&xd, &y, &beta);
    let ids: Vec<usize> = (0..rows.len()).collect();
    let got = clustered_covariance(&x, &e, &ids, &invert(&gram(&xd))).unwrap();
    let want = hc1_covariance(&xd, &e);
    for (gr, wr) in got.iter().zip(&want) {
        for (g, w) in gr.iter().zip(wr) {
            assert!(close(*g, *w, 1e-10), "{g} vs {w}");
        }
    }
}

#[test]
fn residuals_are_orthogonal_and_r2_is_squared_correlation() {
    let rows = panel(4, 13.57, 3);
    let fit = fit_ols(&rows, Spec::Pooled, Benchmark::Ois).unwrap();
    let (x, y) = dense(&rows, Spec::Pooled);
    let fitted: Vec<f64> = spec_rows(&rows, Spec::Pooled).iter().map(|r| fit.predict(r)).collect();
    let e: Vec<f64> = y.iter().zip(&fitted).map(|(a, f)| a - f).collect();
    for j in 0..x[0].len() {
        let dot: f64 = x.iter().zip(&e).map(|(row, ei)| row[j] * ei).sum();
        let scale: f64 = x.iter().map(|row| row[j].abs()).sum::<f64>() * 13.57;
        assert!(dot.abs() <= 1e-9 * scale, "column {j}: {dot}");
    }
    let n = y.len() as f64;
    let (my, mf) = (y.iter().sum::<f64>() / n, fitted.iter().sum::<f64>() / n);
    let cov: f64 = y.iter().zip(&fitted).map(|(a, f)| (a - my) * (f - mf)).sum();
    let vy: f64 = y.iter().map(|a| (a - my).powi(2)).sum();
    let vf: f64 = fitted.iter().map(|f| (f - mf).powi(2)).sum();
    assert!((fit.r2 - cov * cov / (vy * vf)).abs() <= 1e-10);
}

#[test]
fn noiseless_panel_recovers_plant() {
    let rows = panel(5, 0.0, 3);
    let plant = PlantedPanelSpec::table2(5).coefficients;
    let fit = fit_ols(&rows, Spec::Pooled, Benchmark::Ois).unwrap();
    for (r, b) in plant {
        assert!(close(fit.coefficient(r).unwrap(), b, 1e-8), "{r}");
    }
    assert!((fit.r2 - 1.0).abs() < 1e-12);
}

#[test]
fn per_bin_r2_uses_bin_means() {
    let rows = panel(6, 13.57, 3);
    let fit = fit_ols(&rows, Spec::Pooled, Benchmark::Ois).unwrap();
    for (bin, r2) in &fit.per_bin_r2 {
        let pairs: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.bin == *bin)
            .map(|r| (r.cg_bp, fit.predict(r)))
            .collect();
        if pairs.len() < MIN_BIN_ROWS {
            assert!(r2.is_none());
            continue;
        }
        let m = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
        let sst: f64 = pairs.iter().map(|p| (p.0 - m).powi(2)).sum();
        let sse: f64 = pairs.iter().map(|p| (p.0 - p.1).powi(2)).sum();
        assert!((r2.unwrap() - (1.0 - sse / sst)).abs() <= 1e-12);
    }
}

#[test]
fn loyo_folds_partition_the_sample() {
    let rows = panel(7, 13.57, 4);
    let report = run_loyo(&rows, Spec::Pooled, Benchmark::Ois).unwrap();
    let years: Vec<i32> = report.folds.iter().map(|f| f.year).collect();
    assert_eq!(years, vec![2016, 2017, 2018, 2019]);
    assert_eq!(report.folds.iter().map(|f| f.n_test).sum::<usize>(), rows.len());
    for f in &report.folds {
        assert_eq!(f.n_train + f.n_test, rows.len());
        assert_eq!(f.n_test, rows.iter().filter(|r| r.date.year() == f.year).count());
    }
}

#[test]
fn noiseless_folds_predict_perfectly() {
    let rows = panel(8, 0.0, 4);
    let report = run_loyo(&rows, Spec::Pooled, Benchmark::Ois).unwrap();
    for f in &report.folds {
        for m in f.metrics.values() {
            assert!((m.oos_r2.unwrap() - 1.0).abs() < 1e-9);
        }
    }
    for s in sign_table(&report) {
        assert_eq!(s.folds, 4);
        assert!(s.positives == 4 || s.negatives == 4);
    }
}

#[test]
fn full_sample_model_reproduces_in_sample_r2() {
    let rows = panel(9, 13.57, 4);
    let fit = fit_ols(&rows, Spec::Pooled, Benchmark::Ois).unwrap();
    let coefs = fit.coefficients();
    let report =
        run_loyo_with(&rows, Spec::Pooled, Benchmark::Ois, |_| Ok(coefs.clone())).unwrap();
    let pooled = report.aggregates[&Scope::All].pooled_r2.unwrap();
    assert!((pooled - fit.r2).abs() <= 1e-10, "{pooled} vs {}", fit.r2);
}

fn report_with(counts: &[(usize, usize, usize)]) -> LoyoReport {
    LoyoReport {
        spec: Spec::Pooled,
        benchmark: Benchmark::Ois,
        folds: Vec::new(),
        aggregates: BTreeMap::new(),
        ex2020: None,
        sign_counts: counts
            .iter()
            .zip(Regressor::ALL)
            .map(|(&(positives, negatives, zeros), regressor)| SignCount {
                regressor,
                positives,
                negatives,
                zeros,
            })
            .collect(),
    }
}

#[test]
fn sign_table_rendering() {
    let t = sign_table(&report_with(&[(10, 0, 0), (0, 10, 0), (7, 3, 0), (10, 0, 1)]));
    let r: Vec<&str> = t.iter().map(|s| s.rendered.as_str()).collect();
    assert_eq!(r, ["+ 10/10", "\u{2212} 10/10", "mixed (+ 7/10, \u{2212} 3/10)", "+ 10/10"]);
    assert!(t[3].zero_flagged && !t[0].zero_flagged);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fit_ignores_row_order_and_cluster_labels(seed in 0u64..1000, shuffle in any::<u64>()) {
        let rows = panel(seed, 13.57, 3);
        let base = fit_ols(&rows, Spec::Pooled, Benchmark::Ois).unwrap();
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let moved = fit_ols(&shuffled, Spec::Pooled, Benchmark::Ois).unwrap();
        for (a, b) in base.terms.iter().zip(&moved.terms) {
            prop_assert!(close(a.estimate, b.estimate, 1e-9));
            prop_assert!(close(a.clustered_se.unwrap(), b.clustered_se.unwrap(), 1e-9));
        }

        let sample: Vec<&PanelRow> = rows.iter().collect();
        let x = design_matrix(&sample, Spec::Pooled.regressors());
        let (xd, y) = dense(&rows, Spec::Pooled);
        let e = residuals(&xd, &y, &normal_equations(&xd, &y));
        let inv = invert(&gram(&xd));
        let dates: Vec<_> = rows.iter().map(|r| r.date).collect();
        let relabelled: Vec<u64> = dates
            .iter()
            .map(|d| (d.num_days_from_ce() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ shuffle)
            .collect();
        let a = clustered_covariance(&x, &e, &dates, &inv).unwrap();
        let b = clustered_covariance(&x, &e, &relabelled, &inv).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (va, vb) in ra.iter().zip(rb) {
                prop_assert!(close(*va, *vb, 1e-10));
            }
        }
    }
}
