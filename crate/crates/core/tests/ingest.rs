use carrygap_core::ingest::{
    align_macro, apply_filters, load_quotes, pair_quotes, read_tenor_series, read_value_series,
    write_quotes, write_tenor_series, write_value_series, FilterConfig, IngestError, MacroFiles,
    QuotePair,
};
use carrygap_core::synthgen::{gen_dataset, DatasetSpec};
use carrygap_core::Market;
use chrono::NaiveDate;
use proptest::prelude::*;

fn dataset() -> carrygap_core::synthgen::SyntheticDataset {
    gen_dataset(&DatasetSpec { years: 1, day_stride: 40, ..DatasetSpec::default() }).unwrap()
}

#[test]
fn quote_file_round_trip() {
    let data = dataset();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spx.csv");
    let quotes = &data.quotes[&Market::Spx];
    write_quotes(std::fs::File::create(&path).unwrap(), quotes).unwrap();
    let load = load_quotes(&path, Market::Spx, Default::default()).unwrap();
    assert_eq!(load.skipped, 0);
    assert_eq!(&load.quotes, quotes);
}

#[test]
fn macro_files_round_trip_and_align() {
    let data = dataset();
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    write_tenor_series(std::fs::File::create(p("ois.csv")).unwrap(), &data.raw.ois).unwrap();
    write_value_series(std::fs::File::create(p("vix.csv")).unwrap(), &data.raw.vix).unwrap();
    write_value_series(std::fs::File::create(p("nfci.csv")).unwrap(), &data.raw.nfci).unwrap();

    let (ois, w) = read_tenor_series(std::fs::File::open(p("ois.csv")).unwrap()).unwrap();
    assert_eq!(ois, data.raw.ois);
    assert_eq!((w.duplicates, w.bad_rows), (0, 0));
    let (vix, _) = read_value_series(std::fs::File::open(p("vix.csv")).unwrap(), true).unwrap();
    assert_eq!(vix, data.raw.vix);

    let aligned = align_macro(&MacroFiles {
        ois: Some(p("ois.csv")),
        vix: Some(p("vix.csv")),
        nfci: Some(p("nfci.csv")),
        ..MacroFiles::default()
    })
    .unwrap();
    let s = aligned.series;
    assert!(s.dgs_yield.is_empty() && s.rvx.is_empty());
    for (day, v) in &s.nfci {
        let (_, last) = data.raw.nfci.range(..=*day).next_back().unwrap();
        assert_eq!(v, last);
    }
}

#[test]
fn missing_macro_file_names_the_path() {
    let err = align_macro(&MacroFiles {
        vix: Some("/nonexistent/vix.csv".into()),
        ..MacroFiles::default()
    })
    .unwrap_err();
    assert!(matches!(err, IngestError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/vix.csv"));
}

#[test]
fn schema_violation_is_fatal() {
    let text = "date,rate\n2020-01-02,1.0\n";
    assert!(matches!(
        read_value_series(text.as_bytes(), false),
        Err(IngestError::Header { .. })
    ));
}

fn pairs_strategy() -> impl Strategy<Value = Vec<QuotePair>> {
    let date = NaiveDate::from_ymd_opt(2020, 6, 1).unwrap();
    prop::collection::vec(
        (0u64..4, 1u32..60, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..2.0, 0.0f64..2.0),
        0..120,
    )
    .prop_map(move |v| {
        v.into_iter()
            .map(|(e, k, cm, pm, cs, ps)| {
                let expiry = date + chrono::Days::new(30 * (e + 1));
                QuotePair {
                    market: Market::Spx,
                    date,
                    expiry,
                    strike: f64::from(k) * 50.0,
                    call_mid: cm,
                    put_mid: pm,
                    call_spread: cs,
                    put_spread: ps,
                    tau: (expiry - date).num_days() as f64 / 365.25,
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tightening_filters_never_adds_pairs(
        pairs in pairs_strategy(),
        min_mid in 0.0f64..2.0,
        extra_mid in 0.0f64..2.0,
        max_rel in 0.05f64..2.0,
        shrink in 0.0f64..1.0,
        min_strikes in 0usize..10,
        extra_strikes in 0usize..10,
    ) {
        let loose = FilterConfig { min_mid, max_rel_spread: max_rel, min_strikes };
        let tight = FilterConfig {
            min_mid: min_mid + extra_mid,
            max_rel_spread: max_rel * shrink,
            min_strikes: min_strikes + extra_strikes,
        };
        let a = apply_filters(pairs.clone(), &loose);
        let b = apply_filters(pairs.clone(), &tight);
        prop_assert!(b.surviving_pairs() <= a.surviving_pairs());
        for (expiry, group) in &b.groups {
            let wide = &a.groups[expiry];
            for p in group {
                prop_assert!(wide.contains(p));
            }
        }
        let c = a.counts;
        prop_assert_eq!(
            a.surviving_pairs() + c.low_mid + c.wide_spread + c.thin_expiry_pairs,
            pairs.len()
        );
    }

    #[test]
    fn pairing_is_order_independent(seed in 0u64..1000) {
        let data = dataset();
        let day: Vec<_> = data.quotes[&Market::Rut]
            .iter()
            .filter(|q| q.date == data.quotes[&Market::Rut][0].date)
            .cloned()
            .collect();
        let mut shuffled = day.clone();
        let n = shuffled.len();
        for i in 0..n {
            shuffled.swap(i, (seed as usize * 31 + i * 17) % n);
        }
        let a = pair_quotes(&day).unwrap().pairs;
        let b = pair_quotes(&shuffled).unwrap().pairs;
        prop_assert_eq!(a, b);
    }
}
