use carrygap_core::implied_discount::{extract_panel, fit_cell, CellKey, FitConfig};
use carrygap_core::ingest::QuotePair;
use carrygap_core::synthgen::{gen_quote_cell, PlantedCell};
use carrygap_core::Market;
use carrygap_testkit::{line_fit, median};
use chrono::{Days, NaiveDate};
use proptest::prelude::*;

fn key(offset_days: u64) -> CellKey {
    let date = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    CellKey {
        market: Market::Spx,
        date,
        expiry: date + Days::new(offset_days),
    }
}

fn exact_cell(b: f64, f: f64, strikes: Vec<f64>, cushion: f64) -> Vec<QuotePair> {
    let p = PlantedCell {
        b_true: b,
        f_true: f,
        strikes,
        half_spread: 0.5,
        noise_sd: 0.0,
        cushion,
        seed: 0,
    };
    gen_quote_cell(&p, key(182)).unwrap().pairs
}

#[test]
fn three_strike_example() {
    let pairs = exact_cell(0.98, 4000.0, vec![3900.0, 4000.0, 4100.0], 1.0);
    let g: Vec<f64> = pairs.iter().map(|p| p.call_mid - p.put_mid).collect();
    for (gi, want) in g.iter().zip([98.0, 0.0, -98.0]) {
        assert!((gi - want).abs() < 1e-10);
    }
    let fit = fit_cell(&pairs, &FitConfig::default()).unwrap();
    assert!((fit.b_hat - 0.98).abs() < 1e-12);
    assert!((fit.f_hat - 4000.0).abs() < 1e-9);
    assert!((fit.r2 - 1.0).abs() < 1e-12);
}

#[test]
fn r2_matches_two_pass_oracle() {
    let p = PlantedCell::around_forward(0.97, 3000.0, 15, 40.0, 0.5, 2.0, 99);
    let pairs = gen_quote_cell(&p, key(300)).unwrap().pairs;
    let k: Vec<f64> = pairs.iter().map(|q| q.strike).collect();
    let g: Vec<f64> = pairs.iter().map(|q| q.call_mid - q.put_mid).collect();
    let (slope, intercept, r2) = line_fit(&k, &g);
    let fit = fit_cell(&pairs, &FitConfig::default()).unwrap();
    assert!((fit.r2 - r2).abs() <= 1e-12, "{} vs {r2}", fit.r2);
    assert!((fit.b_hat + slope).abs() <= 1e-12);
    assert!((fit.f_hat - intercept / -slope).abs() <= 1e-8);
}

#[test]
fn thousand_noiseless_cells_round_trip() {
    let base = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
    let planted: Vec<(CellKey, PlantedCell)> = (0..1000u64)
        .map(|i| {
            let date = base + Days::new(i);
            let k = CellKey {
                market: if i % 2 == 0 { Market::Spx } else { Market::Rut },
                date,
                expiry: date + Days::new(30 + i % 700),
            };
            let b = 0.9 + 0.0001 * i as f64;
            let f = 1000.0 + 3.0 * i as f64;
            (k, PlantedCell::around_forward(b, f, 12, f * 0.01, 0.4, 0.0, i))
        })
        .collect();
    let groups: Vec<Vec<QuotePair>> = planted
        .iter()
        .map(|(k, p)| gen_quote_cell(p, *k).unwrap().pairs)
        .collect();
    let out = extract_panel(&groups, &FitConfig::default());
    assert_eq!(out.fits.len(), 1000);
    assert!(out.rejections.is_empty());
    for (k, p) in &planted {
        let fit = out.fits.iter().find(|f| f.key == *k).unwrap();
        assert!((fit.b_hat - p.b_true).abs() <= 1e-10);
        assert!((fit.f_hat - p.f_true).abs() <= 1e-10);
    }
}

#[test]
fn noisy_cells_are_unbiased_with_tight_fit() {
    let (b, f) = (0.98, 4000.0);
    let mut b_hats = Vec::new();
    let mut r2s = Vec::new();
    for seed in 0..1000u64 {
        let p = PlantedCell::around_forward(b, f, 20, 50.0, 0.5, 0.5, seed);
        let fit = fit_cell(&gen_quote_cell(&p, key(365)).unwrap().pairs, &FitConfig::default()).unwrap();
        b_hats.push(fit.b_hat);
        r2s.push(fit.r2);
        assert!((fit.b_hat - b).abs() < 0.005);
    }
    let bias = b_hats.iter().sum::<f64>() / b_hats.len() as f64 - b;
    assert!(bias.abs() < 5e-4, "bias {bias}");
    assert!(median(&r2s) > 0.99999, "median r2 {}", median(&r2s));
}

#[test]
fn same_seed_same_quotes() {
    let p = PlantedCell::around_forward(0.95, 2000.0, 10, 25.0, 0.3, 0.4, 17);
    assert_eq!(gen_quote_cell(&p, key(90)).unwrap(), gen_quote_cell(&p, key(90)).unwrap());
}

#[test]
fn cushion_is_raised_when_needed() {
    let mut p = PlantedCell::around_forward(0.98, 4000.0, 5, 100.0, 5.0, 0.0, 1);
    p.cushion = 0.0;
    let g = gen_quote_cell(&p, key(60)).unwrap();
    assert!(g.cushion_raised);
    assert!(g.cushion > 5.0);
    for q in g.pairs.iter().flat_map(|pair| pair.to_quotes(Default::default())) {
        assert!(q.bid >= 0.0 && q.ask >= q.bid);
    }
}

fn strike_grid() -> impl Strategy<Value = (f64, f64, Vec<f64>)> {
    (0.5f64..=1.1, 500.0f64..5000.0, 3usize..40, 0.002f64..0.05).prop_map(|(b, f, n, step)| {
        let spacing = (f * step).max(1.0);
        let centre = (n as f64 - 1.0) / 2.0;
        let strikes = (0..n).map(|i| f + (i as f64 - centre) * spacing).filter(|k| *k > 0.0).collect();
        (b, f, strikes)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn noiseless_identification_is_exact((b, f, strikes) in strike_grid(), cushion in 0.0f64..50.0) {
        prop_assume!(strikes.len() >= 3);
        let pairs = exact_cell(b, f, strikes, cushion);
        let fit = fit_cell(&pairs, &FitConfig::default()).unwrap();
        prop_assert!((fit.b_hat - b).abs() <= 1e-10, "b {} vs {}", fit.b_hat, b);
        prop_assert!((fit.f_hat - f).abs() <= 1e-10, "f {} vs {}", fit.f_hat, f);
    }

    #[test]
    fn unit_change_scales_only_the_forward((b, f, strikes) in strike_grid(), c in 0.1f64..10.0) {
        prop_assume!(strikes.len() >= 3);
        let p = PlantedCell { b_true: b, f_true: f, strikes, half_spread: 0.2, noise_sd: 0.3, cushion: 1.0, seed: 5 };
        let pairs = gen_quote_cell(&p, key(200)).unwrap().pairs;
        let scaled: Vec<QuotePair> = pairs
            .iter()
            .map(|q| QuotePair {
                strike: q.strike * c,
                call_mid: q.call_mid * c,
                put_mid: q.put_mid * c,
                call_spread: q.call_spread * c,
                put_spread: q.put_spread * c,
                ..q.clone()
            })
            .collect();
        let a = fit_cell(&pairs, &FitConfig::default()).unwrap();
        let s = fit_cell(&scaled, &FitConfig::default()).unwrap();
        prop_assert!((a.b_hat - s.b_hat).abs() <= 1e-9 * a.b_hat);
        prop_assert!((a.f_hat * c - s.f_hat).abs() <= 1e-9 * s.f_hat.abs());
    }

    #[test]
    fn common_shift_of_both_legs_changes_nothing((b, f, strikes) in strike_grid(), shift in 0.0f64..100.0) {
        prop_assume!(strikes.len() >= 3);
        let p = PlantedCell { b_true: b, f_true: f, strikes, half_spread: 0.2, noise_sd: 0.3, cushion: 1.0, seed: 9 };
        let pairs = gen_quote_cell(&p, key(200)).unwrap().pairs;
        let shifted: Vec<QuotePair> = pairs
            .iter()
            .map(|q| QuotePair { call_mid: q.call_mid + shift, put_mid: q.put_mid + shift, ..q.clone() })
            .collect();
        let a = fit_cell(&pairs, &FitConfig::default()).unwrap();
        let s = fit_cell(&shifted, &FitConfig::default()).unwrap();
        prop_assert!((a.b_hat - s.b_hat).abs() <= 1e-9);
        prop_assert!((a.f_hat - s.f_hat).abs() <= 1e-7 * f);
        prop_assert!((a.r2 - s.r2).abs() <= 1e-9);
    }

    #[test]
    fn generated_quotes_are_valid((b, f, strikes) in strike_grid(), hs in 0.0f64..20.0, noise in 0.0f64..5.0, seed in any::<u64>()) {
        prop_assume!(strikes.len() >= 3);
        let p = PlantedCell { b_true: b, f_true: f, strikes, half_spread: hs, noise_sd: noise, cushion: 1.0, seed };
        for pair in gen_quote_cell(&p, key(100)).unwrap().pairs {
            for q in pair.to_quotes(Default::default()) {
                prop_assert!(q.bid >= 0.0 && q.ask >= q.bid);
            }
        }
    }
}
