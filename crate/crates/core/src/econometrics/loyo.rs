use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::Datelike;
use rayon::prelude::*;
use serde::Serialize;

use super::ols::{fit_coefficients, predict_with, spec_rows, Regressor, Spec};
use super::panel::PanelRow;
use super::EconError;
use crate::stats::{mean, median, pearson};
use crate::{Benchmark, Market};

/// Folds with fewer holdout rows are reported but left out of aggregates.
pub const MIN_FOLD_TEST_ROWS: usize = 30;
pub const EXCLUDED_YEAR: i32 = 2020;

/// Subset of holdout rows a metric is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scope {
    All,
    Spx,
    Rut,
}

impl Scope {
    fn admits(self, row: &PanelRow) -> bool {
        match self {
            Scope::All => true,
            Scope::Spx => row.market == Market::Spx,
            Scope::Rut => row.market == Market::Rut,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scope::All => "ALL",
            Scope::Spx => "SPX",
            Scope::Rut => "RUT",
        }
    }

    pub fn for_spec(spec: Spec) -> &'static [Scope] {
        match spec {
            Spec::Pooled => &[Scope::All, Scope::Spx, Scope::Rut],
            Spec::SpxOnly => &[Scope::Spx],
            Spec::RutOnly => &[Scope::Rut],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldMetrics {
    pub n_test: usize,
    /// `1 - SSE / SST` with SST around the holdout-year mean.
    pub oos_r2: Option<f64>,
    /// Same, with SST around the training-sample mean.
    pub oos_r2_train_mean: Option<f64>,
    pub corr: Option<f64>,
    pub rmse_bp: Option<f64>,
    #[serde(skip)]
    pairs: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoyoFold {
    pub year: i32,
    pub n_train: usize,
    pub n_test: usize,
    /// Fewer than [`MIN_FOLD_TEST_ROWS`] holdout rows.
    pub flagged: bool,
    pub metrics: BTreeMap<Scope, FoldMetrics>,
    pub coefficients: Vec<(Regressor, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoyoAggregates {
    pub n_folds: usize,
    pub mean_r2: Option<f64>,
    pub median_r2: Option<f64>,
    /// Holdout predictions of all folds pooled, SST around their common mean.
    pub pooled_r2: Option<f64>,
    pub years_positive: usize,
    pub mean_corr: Option<f64>,
    pub mean_rmse_bp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignCount {
    pub regressor: Regressor,
    pub positives: usize,
    pub negatives: usize,
    /// Exact zeros, already counted among `positives`.
    pub zeros: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoyoReport {
    pub spec: Spec,
    pub benchmark: Benchmark,
    pub folds: Vec<LoyoFold>,
    pub aggregates: BTreeMap<Scope, LoyoAggregates>,
    /// Present when the excluded year is in the sample.
    pub ex2020: Option<BTreeMap<Scope, LoyoAggregates>>,
    pub sign_counts: Vec<SignCount>,
}

/// Leave-one-calendar-year-out refits of `spec`.
pub fn run_loyo(rows: &[PanelRow], spec: Spec, benchmark: Benchmark) -> Result<LoyoReport, EconError> {
    run_loyo_with(rows, spec, benchmark, |train| fit_coefficients(train, spec))
}

/// LOYO with a caller-supplied estimator mapping training rows to coefficients.
pub fn run_loyo_with<F>(
    rows: &[PanelRow],
    spec: Spec,
    benchmark: Benchmark,
    estimate: F,
) -> Result<LoyoReport, EconError>
where
    F: Fn(&[&PanelRow]) -> Result<Vec<(Regressor, f64)>, EconError> + Sync,
{
    let sample = spec_rows(rows, spec);
    let years: BTreeSet<i32> = sample.iter().map(|r| r.date.year()).collect();
    if years.len() < 3 {
        return Err(EconError::TooFewYears { found: years.len() });
    }
    let years: Vec<i32> = years.into_iter().collect();

    let folds: Vec<LoyoFold> = years
        .par_iter()
        .map(|&year| {
            let (test, train): (Vec<&PanelRow>, Vec<&PanelRow>) =
                sample.iter().partition(|r| r.date.year() == year);
            let coefficients = estimate(&train)?;
            let train_mean = mean(&train.iter().map(|r| r.cg_bp).collect::<Vec<_>>()).unwrap_or(0.0);
            let metrics = Scope::for_spec(spec)
                .iter()
                .map(|&scope| {
                    let pairs: Vec<(f64, f64)> = test
                        .iter()
                        .filter(|r| scope.admits(r))
                        .map(|r| (r.cg_bp, predict_with(&coefficients, r)))
                        .collect();
                    (scope, fold_metrics(pairs, train_mean))
                })
                .collect();
            Ok(LoyoFold {
                year,
                n_train: train.len(),
                n_test: test.len(),
                flagged: test.len() < MIN_FOLD_TEST_ROWS,
                metrics,
                coefficients,
            })
        })
        .collect::<Result<_, EconError>>()?;

    let aggregates = aggregate(&folds, spec, |_| true);
    let ex2020 = years
        .contains(&EXCLUDED_YEAR)
        .then(|| aggregate(&folds, spec, |f| f.year != EXCLUDED_YEAR));
    let sign_counts = spec
        .regressors()
        .iter()
        .map(|&regressor| {
            let values: Vec<f64> = folds
                .iter()
                .filter_map(|f| f.coefficients.iter().find(|c| c.0 == regressor).map(|c| c.1))
                .collect();
            SignCount {
                regressor,
                positives: values.iter().filter(|v| **v >= 0.0).count(),
                negatives: values.iter().filter(|v| **v < 0.0).count(),
                zeros: values.iter().filter(|v| **v == 0.0).count(),
            }
        })
        .collect();

    Ok(LoyoReport {
        spec,
        benchmark,
        folds,
        aggregates,
        ex2020,
        sign_counts,
    })
}

fn fold_metrics(pairs: Vec<(f64, f64)>, train_mean: f64) -> FoldMetrics {
    let n = pairs.len();
    if n == 0 {
        return FoldMetrics {
            n_test: 0,
            oos_r2: None,
            oos_r2_train_mean: None,
            corr: None,
            rmse_bp: None,
            pairs,
        };
    }
    let actual: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let pred: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let holdout_mean = mean(&actual).unwrap_or(0.0);
    let sse: f64 = pairs.iter().map(|(a, p)| (a - p).powi(2)).sum();
    let r2_around = |m: f64| {
        let sst: f64 = actual.iter().map(|a| (a - m).powi(2)).sum();
        (sst > 0.0).then(|| 1.0 - sse / sst)
    };
    FoldMetrics {
        n_test: n,
        oos_r2: r2_around(holdout_mean),
        oos_r2_train_mean: r2_around(train_mean),
        corr: pearson(&actual, &pred),
        rmse_bp: Some((sse / n as f64).sqrt()),
        pairs,
    }
}

fn aggregate(
    folds: &[LoyoFold],
    spec: Spec,
    keep: impl Fn(&LoyoFold) -> bool,
) -> BTreeMap<Scope, LoyoAggregates> {
    let used: Vec<&LoyoFold> = folds.iter().filter(|f| !f.flagged && keep(f)).collect();
    Scope::for_spec(spec)
        .iter()
        .map(|&scope| {
            let per_fold: Vec<&FoldMetrics> = used
                .iter()
                .filter_map(|f| f.metrics.get(&scope))
                .filter(|m| m.n_test > 0)
                .collect();
            let r2s: Vec<f64> = per_fold.iter().filter_map(|m| m.oos_r2).collect();
            let corrs: Vec<f64> = per_fold.iter().filter_map(|m| m.corr).collect();
            let rmses: Vec<f64> = per_fold.iter().filter_map(|m| m.rmse_bp).collect();
            let all: Vec<(f64, f64)> = per_fold.iter().flat_map(|m| m.pairs.iter().copied()).collect();
            let pooled_r2 = {
                let m = mean(&all.iter().map(|p| p.0).collect::<Vec<_>>());
                m.and_then(|m| {
                    let sst: f64 = all.iter().map(|(a, _)| (a - m).powi(2)).sum();
                    let sse: f64 = all.iter().map(|(a, p)| (a - p).powi(2)).sum();
                    (sst > 0.0).then(|| 1.0 - sse / sst)
                })
            };
            (
                scope,
                LoyoAggregates {
                    n_folds: per_fold.len(),
                    mean_r2: mean(&r2s),
                    median_r2: median(&r2s),
                    pooled_r2,
                    years_positive: r2s.iter().filter(|r| **r > 0.0).count(),
                    mean_corr: mean(&corrs),
                    mean_rmse_bp: mean(&rmses),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignSummary {
    pub regressor: Regressor,
    pub positives: usize,
    pub negatives: usize,
    pub folds: usize,
    pub zero_flagged: bool,
    pub rendered: String,
}

/// Per-coefficient sign counts as `+ a/n`, `− b/n` or `mixed (+ a/n, − b/n)`.
pub fn sign_table(report: &LoyoReport) -> Vec<SignSummary> {
    report
        .sign_counts
        .iter()
        .map(|c| {
            let n = c.positives + c.negatives;
            let rendered = match (c.positives, c.negatives) {
                (p, 0) => format!("+ {p}/{n}"),
                (0, m) => format!("\u{2212} {m}/{n}"),
                (p, m) => format!("mixed (+ {p}/{n}, \u{2212} {m}/{n})"),
            };
            SignSummary {
                regressor: c.regressor,
                positives: c.positives,
                negatives: c.negatives,
                folds: n,
                zero_flagged: c.zeros > 0,
                rendered,
            }
        })
        .collect()
}

pub const LOYO_HEADER: [&str; 11] = [
    "year", "scope", "n_train", "n_test", "flagged", "oos_r2", "oos_r2_train_mean", "corr",
    "rmse_bp", "coefficient", "estimate",
];

/// Per-fold rows: one line per (fold, scope) with metrics, followed by one
/// line per (fold, coefficient).
pub fn write_loyo<W: Write>(writer: W, report: &LoyoReport) -> Result<(), csv::Error> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LOYO_HEADER)?;
    for f in &report.folds {
        for (scope, m) in &f.metrics {
            w.write_record([
                f.year.to_string(),
                scope.as_str().to_string(),
                f.n_train.to_string(),
                m.n_test.to_string(),
                f.flagged.to_string(),
                opt(m.oos_r2),
                opt(m.oos_r2_train_mean),
                opt(m.corr),
                opt(m.rmse_bp),
                String::new(),
                String::new(),
            ])?;
        }
        for (r, b) in &f.coefficients {
            w.write_record([
                f.year.to_string(),
                String::new(),
                f.n_train.to_string(),
                f.n_test.to_string(),
                f.flagged.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                r.name().to_string(),
                b.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `sign_table.csv`: one row per (spec, benchmark, regressor).
pub fn write_sign_table<W: Write>(writer: W, reports: &[&LoyoReport]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["spec", "benchmark", "regressor", "positives", "negatives", "folds", "zero_flagged", "summary"])?;
    for report in reports {
        for s in sign_table(report) {
            w.write_record([
                report.spec.as_str().to_string(),
                report.benchmark.as_str().to_string(),
                s.regressor.name().to_string(),
                s.positives.to_string(),
                s.negatives.to_string(),
                s.folds.to_string(),
                s.zero_flagged.to_string(),
                s.rendered,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
