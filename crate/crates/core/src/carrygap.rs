//! Carry gap between a benchmark discount factor and the option-implied one,
//! plus the descriptive statistics computed on the resulting panel.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::curves::{CurveError, RateCurve};
use crate::implied_discount::{CellFit, CellKey};
use crate::stats::{mean, median, std_dev};
use crate::Market;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CarryGapError {
    #[error("year fraction must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("discount factors must be positive (benchmark {benchmark}, implied {implied})")]
    NonPositiveDf { benchmark: f64, implied: f64 },
    #[error("statistics of an empty sample")]
    EmptySample,
    #[error(transparent)]
    Curve(#[from] CurveError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarryGap {
    /// Annualized log ratio, decimal.
    pub cg: f64,
    pub cg_bp: f64,
}

/// `ln(d_bench / b_hat) / tau`; positive when options embed more carry than
/// the benchmark.
pub fn carry_gap(d_bench: f64, b_hat: f64, tau: f64) -> Result<CarryGap, CarryGapError> {
    if !(tau > 0.0) {
        return Err(CarryGapError::NonPositiveTau(tau));
    }
    if !(d_bench > 0.0 && b_hat > 0.0) {
        return Err(CarryGapError::NonPositiveDf {
            benchmark: d_bench,
            implied: b_hat,
        });
    }
    let cg = (d_bench.ln() - b_hat.ln()) / tau;
    Ok(CarryGap { cg, cg_bp: 1e4 * cg })
}

/// Maturity bucket in months, left-closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MaturityBin {
    #[serde(rename = "sub1m")]
    Sub1m,
    #[serde(rename = "1-2m")]
    M1to2,
    #[serde(rename = "2-3m")]
    M2to3,
    #[serde(rename = "3-5m")]
    M3to5,
    #[serde(rename = "5-7m")]
    M5to7,
    #[serde(rename = "7-10m")]
    M7to10,
    #[serde(rename = "10-14m")]
    M10to14,
    #[serde(rename = "14-21m")]
    M14to21,
    #[serde(rename = "21m+")]
    M21plus,
}

impl MaturityBin {
    pub const REGRESSION: [MaturityBin; 8] = [
        MaturityBin::M1to2,
        MaturityBin::M2to3,
        MaturityBin::M3to5,
        MaturityBin::M5to7,
        MaturityBin::M7to10,
        MaturityBin::M10to14,
        MaturityBin::M14to21,
        MaturityBin::M21plus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            MaturityBin::Sub1m => "sub1m",
            MaturityBin::M1to2 => "1-2m",
            MaturityBin::M2to3 => "2-3m",
            MaturityBin::M3to5 => "3-5m",
            MaturityBin::M5to7 => "5-7m",
            MaturityBin::M7to10 => "7-10m",
            MaturityBin::M10to14 => "10-14m",
            MaturityBin::M14to21 => "14-21m",
            MaturityBin::M21plus => "21m+",
        }
    }

    /// Lower edge in months; `None` for the sub-month bucket.
    pub fn lower_months(self) -> Option<f64> {
        Some(match self {
            MaturityBin::Sub1m => return None,
            MaturityBin::M1to2 => 1.0,
            MaturityBin::M2to3 => 2.0,
            MaturityBin::M3to5 => 3.0,
            MaturityBin::M5to7 => 5.0,
            MaturityBin::M7to10 => 7.0,
            MaturityBin::M10to14 => 10.0,
            MaturityBin::M14to21 => 14.0,
            MaturityBin::M21plus => 21.0,
        })
    }

    pub fn in_regression_sample(self) -> bool {
        self != MaturityBin::Sub1m
    }
}

impl fmt::Display for MaturityBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MaturityBin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        std::iter::once(MaturityBin::Sub1m)
            .chain(MaturityBin::REGRESSION)
            .find(|b| b.label() == s.trim())
            .ok_or_else(|| format!("unknown maturity bin `{s}`"))
    }
}

/// Bucket for a year fraction, using months = tau * 12.
pub fn assign_bin(tau: f64) -> MaturityBin {
    let months = tau * 12.0;
    MaturityBin::REGRESSION
        .iter()
        .rev()
        .find(|b| months >= b.lower_months().unwrap_or(f64::INFINITY))
        .copied()
        .unwrap_or(MaturityBin::Sub1m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarryGapObs {
    pub key: CellKey,
    pub tau: f64,
    pub cg: f64,
    pub cg_bp: f64,
    /// Median ATM spread divided by tau, bp per year.
    pub ba_med_over_tau: f64,
    pub bin: MaturityBin,
    /// Benchmark discount factor came from flat extrapolation.
    pub extrapolated: bool,
}

/// Carry-gap observation for a fitted cell against a same-date benchmark curve.
pub fn observe(cell: &CellFit, curve: &RateCurve) -> Result<CarryGapObs, CarryGapError> {
    let d = curve.discount_at(cell.tau)?;
    let gap = carry_gap(d.df, cell.b_hat, cell.tau)?;
    Ok(CarryGapObs {
        key: cell.key,
        tau: cell.tau,
        cg: gap.cg,
        cg_bp: gap.cg_bp,
        ba_med_over_tau: cell.ba_med_atm / cell.tau,
        bin: assign_bin(cell.tau),
        extrapolated: d.extrapolated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyMedian {
    /// `None` for the pooled (both markets) median.
    pub market: Option<Market>,
    pub date: NaiveDate,
    pub median_bp: f64,
    pub n_obs: usize,
}

fn daily_medians(
    obs: &[CarryGapObs],
    group: impl Fn(&CarryGapObs) -> Option<Market>,
) -> Vec<DailyMedian> {
    let mut by_day: BTreeMap<(Option<Market>, NaiveDate), Vec<f64>> = BTreeMap::new();
    for o in obs {
        by_day.entry((group(o), o.key.date)).or_default().push(o.cg_bp);
    }
    by_day
        .into_iter()
        .map(|((market, date), v)| DailyMedian {
            market,
            date,
            median_bp: median(&v).expect("groups are non-empty"),
            n_obs: v.len(),
        })
        .collect()
}

/// Per-(market, date) median carry gap, ordered by (market, date).
pub fn aggregate_daily(obs: &[CarryGapObs]) -> Vec<DailyMedian> {
    daily_medians(obs, |o| Some(o.key.market))
}

/// Per-date median pooling both markets.
pub fn aggregate_daily_pooled(obs: &[CarryGapObs]) -> Vec<DailyMedian> {
    daily_medians(obs, |_| None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std_dev: Option<f64>,
    /// Share strictly above zero, in percent.
    pub pct_positive: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Vec<HistogramBin>,
}

pub const DEFAULT_HIST_WIDTH_BP: f64 = 2.0;

pub fn distribution_stats(values: &[f64], bin_width: f64) -> Result<DistributionStats, CarryGapError> {
    let mean = mean(values).ok_or(CarryGapError::EmptySample)?;
    let median = median(values).ok_or(CarryGapError::EmptySample)?;
    let positive = values.iter().filter(|v| **v > 0.0).count();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DistributionStats {
        n: values.len(),
        mean,
        median,
        std_dev: std_dev(values),
        pct_positive: 100.0 * positive as f64 / values.len() as f64,
        min,
        max,
        histogram: histogram(values, bin_width),
    })
}

/// Fixed-width histogram with edges on multiples of `width`.
pub fn histogram(values: &[f64], width: f64) -> Vec<HistogramBin> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for v in values.iter().filter(|v| v.is_finite()) {
        *counts.entry((v / width).floor() as i64).or_default() += 1;
    }
    let (Some(&first), Some(&last)) = (counts.keys().next(), counts.keys().next_back()) else {
        return Vec::new();
    };
    (first..=last)
        .map(|i| HistogramBin {
            lo: i as f64 * width,
            hi: (i + 1) as f64 * width,
            count: counts.get(&i).copied().unwrap_or(0),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinSummary {
    pub market: Market,
    pub bin: MaturityBin,
    pub n: usize,
    pub mean_bp: f64,
    pub median_bp: f64,
    pub std_dev_bp: Option<f64>,
}

/// Carry-gap level and dispersion by maturity bucket and market.
pub fn maturity_profile(obs: &[CarryGapObs]) -> Vec<BinSummary> {
    let mut groups: BTreeMap<(Market, MaturityBin), Vec<f64>> = BTreeMap::new();
    for o in obs {
        groups.entry((o.key.market, o.bin)).or_default().push(o.cg_bp);
    }
    groups
        .into_iter()
        .map(|((market, bin), v)| BinSummary {
            market,
            bin,
            n: v.len(),
            mean_bp: mean(&v).unwrap_or(f64::NAN),
            median_bp: median(&v).unwrap_or(f64::NAN),
            std_dev_bp: std_dev(&v),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearSummary {
    pub market: Option<Market>,
    pub year: i32,
    pub n_days: usize,
    pub mean_bp: f64,
    pub median_bp: f64,
}

/// Calendar-year summaries of a daily median series.
pub fn yearly_profile(daily: &[DailyMedian]) -> Vec<YearSummary> {
    let mut groups: BTreeMap<(Option<Market>, i32), Vec<f64>> = BTreeMap::new();
    for d in daily {
        groups.entry((d.market, d.date.year())).or_default().push(d.median_bp);
    }
    groups
        .into_iter()
        .map(|((market, year), v)| YearSummary {
            market,
            year,
            n_days: v.len(),
            mean_bp: mean(&v).unwrap_or(f64::NAN),
            median_bp: median(&v).unwrap_or(f64::NAN),
        })
        .collect()
}

pub const CARRYGAP_HEADER: [&str; 7] =
    ["market", "date", "expiry", "tau", "bin", "cg_bp", "ba_med_over_tau"];

#[derive(Serialize)]
struct CarryGapRecord {
    market: Market,
    date: NaiveDate,
    expiry: NaiveDate,
    tau: f64,
    bin: MaturityBin,
    cg_bp: f64,
    ba_med_over_tau: f64,
}

pub fn write_carrygap_panel<W: Write>(writer: W, obs: &[CarryGapObs]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for o in obs {
        w.serialize(CarryGapRecord {
            market: o.key.market,
            date: o.key.date,
            expiry: o.key.expiry,
            tau: o.tau,
            bin: o.bin,
            cg_bp: o.cg_bp,
            ba_med_over_tau: o.ba_med_over_tau,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `market,date,median_bp,n_obs`; pooled rows carry market `ALL`.
pub fn write_daily_medians<W: Write>(writer: W, daily: &[DailyMedian]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["market", "date", "median_bp", "n_obs"])?;
    for d in daily {
        let market = d.market.map_or("ALL", Market::as_str);
        w.write_record([
            market.to_string(),
            d.date.to_string(),
            d.median_bp.to_string(),
            d.n_obs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_discounting_is_zero() {
        for tau in [0.1, 1.0, 2.7] {
            assert_eq!(carry_gap(0.97, 0.97, tau).unwrap().cg, 0.0);
        }
    }

    #[test]
    fn half_year_example() {
        let g = carry_gap(0.99, 0.98, 0.5).unwrap();
        let expected = 1e4 * 2.0 * (0.99f64 / 0.98).ln();
        assert!((g.cg_bp - expected).abs() < 1e-9);
        assert!((g.cg_bp - 203.05).abs() < 0.005);
        let swapped = carry_gap(0.98, 0.99, 0.5).unwrap();
        assert_eq!(swapped.cg_bp, -g.cg_bp);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(carry_gap(0.9, 0.9, 0.0), Err(CarryGapError::NonPositiveTau(_))));
        assert!(matches!(carry_gap(0.0, 0.9, 1.0), Err(CarryGapError::NonPositiveDf { .. })));
        assert!(matches!(carry_gap(0.9, -0.9, 1.0), Err(CarryGapError::NonPositiveDf { .. })));
    }

    #[test]
    fn bins() {
        assert_eq!(assign_bin(1.0), MaturityBin::M10to14);
        assert_eq!(assign_bin(2.0 / 12.0), MaturityBin::M2to3);
        assert_eq!(assign_bin(1.0 / 12.0), MaturityBin::M1to2);
        assert_eq!(assign_bin(0.02), MaturityBin::Sub1m);
        assert!(!assign_bin(0.02).in_regression_sample());
        assert_eq!(assign_bin(21.0 / 12.0), MaturityBin::M21plus);
        assert_eq!(assign_bin(5.0), MaturityBin::M21plus);
        assert_eq!("10-14m".parse::<MaturityBin>().unwrap(), MaturityBin::M10to14);
    }

    #[test]
    fn distribution_examples() {
        let s = distribution_stats(&[-1.0, 2.0, 3.0, 4.0], 2.0).unwrap();
        assert_eq!((s.mean, s.median, s.pct_positive), (2.0, 2.5, 75.0));
        let s = distribution_stats(&[5.0, 5.0, 5.0], 2.0).unwrap();
        assert_eq!((s.mean, s.median, s.pct_positive), (5.0, 5.0, 100.0));
        assert_eq!(s.histogram, vec![HistogramBin { lo: 4.0, hi: 6.0, count: 3 }]);
        let s = distribution_stats(&[0.0, 1.0], 2.0).unwrap();
        assert_eq!(s.pct_positive, 50.0);
        assert!(matches!(distribution_stats(&[], 2.0), Err(CarryGapError::EmptySample)));
    }

    #[test]
    fn histogram_fills_gaps() {
        let h = histogram(&[-3.0, 0.5, 5.0], 2.0);
        assert_eq!(h.len(), 5);
        assert_eq!(h[0].lo, -4.0);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 3);
    }
}
