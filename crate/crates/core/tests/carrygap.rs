use carrygap_core::carrygap::{
    assign_bin, carry_gap, distribution_stats, histogram, MaturityBin,
};
use carrygap_core::stats::median;
use carrygap_core::synthgen::gen_ar1_series;
use carrygap_testkit::normal_positive_share;
use proptest::prelude::*;

#[test]
fn half_year_example_to_micro_bp() {
    let want = 1e4 * 2.0 * (0.99f64 / 0.98).ln();
    let g = carry_gap(0.99, 0.98, 0.5).unwrap();
    assert!((g.cg_bp - want).abs() <= 1e-6);
    assert!((g.cg_bp - 203.05).abs() < 0.005);
    assert!((carry_gap(0.98, 0.99, 0.5).unwrap().cg_bp + want).abs() <= 1e-6);
}

#[test]
fn planted_daily_mean_is_recovered() {
    // AR(1) with persistence 0.9 has an effective sample of n (1 - rho) / (1 + rho).
    let (mean, sd, rho, n) = (36.91, 15.0, 0.9, 40_000usize);
    let series = gen_ar1_series(mean, sd, rho, n, 2024).unwrap();
    let stats = distribution_stats(&series, 2.0).unwrap();
    let n_eff = n as f64 * (1.0 - rho) / (1.0 + rho);
    let mc_err = sd / n_eff.sqrt();
    assert!((stats.mean - mean).abs() < 4.0 * mc_err, "mean {}", stats.mean);
    let share = normal_positive_share(mean, sd);
    let share_err = (share * (1.0 - share) / n_eff).sqrt();
    assert!(
        (stats.pct_positive / 100.0 - share).abs() < 4.0 * share_err,
        "{} vs {}",
        stats.pct_positive,
        100.0 * share
    );
    assert_eq!(histogram(&series, 2.0).iter().map(|b| b.count).sum::<usize>(), n);
}

fn triple() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.05f64..1.2, 0.05f64..1.2, 1e-3f64..30.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn antisymmetric((d, b, tau) in triple()) {
        let ab = carry_gap(d, b, tau).unwrap();
        let ba = carry_gap(b, d, tau).unwrap();
        prop_assert_eq!(ab.cg, -ba.cg);
        prop_assert_eq!(ab.cg_bp, -ba.cg_bp);
    }

    #[test]
    fn halving_tau_doubles_the_gap((d, b, tau) in triple()) {
        let full = carry_gap(d, b, tau).unwrap();
        let half = carry_gap(d, b, tau / 2.0).unwrap();
        prop_assert_eq!(half.cg, 2.0 * full.cg);
    }

    #[test]
    fn bp_and_decimal_agree((d, b, tau) in triple()) {
        let g = carry_gap(d, b, tau).unwrap();
        prop_assert!((g.cg_bp / 1e4 - g.cg).abs() <= 4.0 * f64::EPSILON * g.cg.abs().max(f64::MIN_POSITIVE));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn bins_partition_the_regression_range(months in 1.0f64..60.0) {
        let bin = assign_bin(months / 12.0);
        prop_assert!(bin.in_regression_sample());
        let hits = MaturityBin::REGRESSION
            .iter()
            .filter(|b| {
                let lo = b.lower_months().unwrap();
                let next = MaturityBin::REGRESSION
                    .iter()
                    .filter_map(|c| c.lower_months())
                    .filter(|l| *l > lo)
                    .fold(f64::INFINITY, f64::min);
                months >= lo && months < next
            })
            .count();
        prop_assert_eq!(hits, 1);
    }

    #[test]
    fn median_ignores_monotone_moves_away_from_it(mut v in prop::collection::vec(-100.0f64..100.0, 1..60), bump in 0.0f64..1000.0) {
        let m = median(&v).unwrap();
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let (lo, hi) = (sorted[(n - 1) / 2], sorted[n / 2]);
        for x in v.iter_mut() {
            if *x > hi {
                *x += bump;
            } else if *x < lo {
                *x -= bump;
            }
        }
        prop_assert_eq!(median(&v).unwrap(), m);
    }
}
