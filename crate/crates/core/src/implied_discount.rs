//! Joint identification of the option-implied discount factor and forward.
//!
//! Put-call parity gives `C(K) - P(K) = B (F - K)` for every strike of one
//! expiry, so the synthetic forward `G(K) = C - P` is linear in `K` with
//! slope `-B` and intercept `B F`. A least-squares line through the strike
//! cross-section recovers both.

use std::io::{Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::QuotePair;
use crate::stats::median;
use crate::Market;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub market: Market,
    pub date: NaiveDate,
    pub expiry: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Weights each strike by the inverse of its average leg spread.
    InverseSpread,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub min_strikes: usize,
    /// Half-width of the ATM band as a fraction of the fitted forward.
    pub atm_band: f64,
    pub weighting: Weighting,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            min_strikes: 3,
            atm_band: 0.025,
            weighting: Weighting::Unweighted,
        }
    }
}

/// Diagnostic flags; flagged cells are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CellFlags {
    /// `b_hat > 1.2`.
    pub high_discount: bool,
    /// Fitted forward more than 20% away from the strike-range midpoint.
    pub forward_off_range: bool,
    /// No strike inside the ATM band; spread taken from the strike nearest the forward.
    pub atm_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    pub key: CellKey,
    pub tau: f64,
    pub b_hat: f64,
    pub f_hat: f64,
    pub r2: f64,
    pub n_strikes: usize,
    /// Median ATM bid-ask spread in bp of the discounted forward.
    pub ba_med_atm: f64,
    pub flags: CellFlags,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    #[error("{found} strikes, need at least {required}")]
    TooFewStrikes { found: usize, required: usize },
    #[error("pairs span more than one cell")]
    MixedCell,
    #[error("strike {strike} appears more than once")]
    DuplicateStrike { strike: f64 },
    #[error("all strikes equal: singular design")]
    SingularDesign,
    #[error("non-negative slope {slope} implies a non-positive discount factor")]
    NonNegativeSlope { slope: f64 },
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRejection {
    pub key: CellKey,
    #[serde(flatten)]
    pub reason: RejectReason,
}

/// Fits one expiry's strike cross-section.
pub fn fit_cell(pairs: &[QuotePair], cfg: &FitConfig) -> Result<CellFit, RejectReason> {
    let required = cfg.min_strikes.max(2);
    if pairs.len() < required {
        return Err(RejectReason::TooFewStrikes {
            found: pairs.len(),
            required,
        });
    }
    let first = &pairs[0];
    let key = CellKey {
        market: first.market,
        date: first.date,
        expiry: first.expiry,
    };
    if pairs
        .iter()
        .any(|p| p.market != key.market || p.date != key.date || p.expiry != key.expiry)
    {
        return Err(RejectReason::MixedCell);
    }
    let mut strikes: Vec<f64> = pairs.iter().map(|p| p.strike).collect();
    strikes.sort_by(f64::total_cmp);
    if let Some(w) = strikes.windows(2).find(|w| w[0] == w[1]) {
        return Err(RejectReason::DuplicateStrike { strike: w[0] });
    }

    let xs: Vec<f64> = pairs.iter().map(|p| p.strike).collect();
    let ys: Vec<f64> = pairs.iter().map(QuotePair::synthetic_forward).collect();
    let ws: Vec<f64> = match cfg.weighting {
        Weighting::Unweighted => vec![1.0; pairs.len()],
        Weighting::InverseSpread => pairs
            .iter()
            .map(|p| 1.0 / (0.5 * (p.call_spread + p.put_spread)).max(1e-8))
            .collect(),
    };
    if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
        return Err(RejectReason::NonFinite);
    }

    let line = weighted_line(&xs, &ys, &ws).ok_or(RejectReason::SingularDesign)?;
    if !(line.slope < 0.0) {
        return Err(RejectReason::NonNegativeSlope { slope: line.slope });
    }
    let b_hat = -line.slope;
    // intercept = y_bar - slope * x_bar = B F, so F = x_bar + y_bar / B; this
    // form avoids cancelling two large terms.
    let f_hat = line.x_mean + line.y_mean / b_hat;

    let mut flags = CellFlags {
        high_discount: b_hat > 1.2,
        ..CellFlags::default()
    };
    let mid_range = 0.5 * (strikes[0] + strikes[strikes.len() - 1]);
    flags.forward_off_range = (f_hat - mid_range).abs() > 0.2 * mid_range;

    let (spread, fallback) = atm_spread(pairs, f_hat, cfg.atm_band);
    flags.atm_fallback = fallback;
    let ba_med_atm = 1e4 * spread / (f_hat * b_hat);

    Ok(CellFit {
        key,
        tau: first.tau,
        b_hat,
        f_hat,
        r2: line.r2,
        n_strikes: pairs.len(),
        ba_med_atm,
        flags,
    })
}

struct Line {
    slope: f64,
    x_mean: f64,
    y_mean: f64,
    r2: f64,
}

/// Weighted least squares of `y` on `x` with intercept, via centred sums.
fn weighted_line(xs: &[f64], ys: &[f64], ws: &[f64]) -> Option<Line> {
    let w_sum: f64 = ws.iter().sum();
    let x_mean = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / w_sum;
    let y_mean = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / w_sum;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        let dx = x - x_mean;
        let dy = y - y_mean;
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((x, y), w)| {
            let e = y - y_mean - slope * (x - x_mean);
            w * e * e
        })
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Some(Line {
        slope,
        x_mean,
        y_mean,
        r2,
    })
}

/// Median average-leg spread inside the ATM band. Falls back to the strike
/// closest to the forward when the band is empty.
fn atm_spread(pairs: &[QuotePair], forward: f64, band: f64) -> (f64, bool) {
    let avg = |p: &QuotePair| 0.5 * (p.call_spread + p.put_spread);
    let inside: Vec<f64> = pairs
        .iter()
        .filter(|p| ((p.strike - forward) / forward).abs() <= band)
        .map(avg)
        .collect();
    match median(&inside) {
        Some(m) => (m, false),
        None => {
            let nearest = pairs
                .iter()
                .min_by(|a, b| {
                    (a.strike - forward)
                        .abs()
                        .total_cmp(&(b.strike - forward).abs())
                })
                .expect("fit_cell guarantees at least two pairs");
            (avg(nearest), true)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExtractOutcome {
    /// Sorted by `(market, date, tau)`.
    pub fits: Vec<CellFit>,
    pub rejections: Vec<CellRejection>,
}

/// Fits every cell in parallel; output order does not depend on scheduling.
pub fn extract_panel(cells: &[Vec<QuotePair>], cfg: &FitConfig) -> ExtractOutcome {
    let results: Vec<_> = cells
        .par_iter()
        .filter(|c| !c.is_empty())
        .map(|pairs| {
            fit_cell(pairs, cfg).map_err(|reason| CellRejection {
                key: CellKey {
                    market: pairs[0].market,
                    date: pairs[0].date,
                    expiry: pairs[0].expiry,
                },
                reason,
            })
        })
        .collect();
    let mut out = ExtractOutcome::default();
    for r in results {
        match r {
            Ok(fit) => out.fits.push(fit),
            Err(rej) => out.rejections.push(rej),
        }
    }
    out.fits.sort_by(|a, b| {
        (a.key.market, a.key.date)
            .cmp(&(b.key.market, b.key.date))
            .then(a.tau.total_cmp(&b.tau))
            .then(a.key.expiry.cmp(&b.key.expiry))
    });
    out.rejections.sort_by_key(|r| r.key);
    out
}

pub const CELLS_HEADER: [&str; 9] = [
    "market", "date", "expiry", "tau", "b_hat", "f_hat", "r2", "n_strikes", "ba_med_bp",
];

/// Row of `cells.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub market: Market,
    pub date: NaiveDate,
    pub expiry: NaiveDate,
    pub tau: f64,
    pub b_hat: f64,
    pub f_hat: f64,
    pub r2: f64,
    pub n_strikes: usize,
    pub ba_med_bp: f64,
}

impl From<&CellFit> for CellRecord {
    fn from(c: &CellFit) -> Self {
        Self {
            market: c.key.market,
            date: c.key.date,
            expiry: c.key.expiry,
            tau: c.tau,
            b_hat: c.b_hat,
            f_hat: c.f_hat,
            r2: c.r2,
            n_strikes: c.n_strikes,
            ba_med_bp: c.ba_med_atm,
        }
    }
}

impl From<CellRecord> for CellFit {
    fn from(r: CellRecord) -> Self {
        Self {
            key: CellKey {
                market: r.market,
                date: r.date,
                expiry: r.expiry,
            },
            tau: r.tau,
            b_hat: r.b_hat,
            f_hat: r.f_hat,
            r2: r.r2,
            n_strikes: r.n_strikes,
            ba_med_atm: r.ba_med_bp,
            flags: CellFlags::default(),
        }
    }
}

pub fn write_cells<W: Write>(writer: W, fits: &[CellFit]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for f in fits {
        w.serialize(CellRecord::from(f))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cells<R: Read>(reader: R) -> Result<Vec<CellFit>, csv::Error> {
    csv::Reader::from_reader(reader)
        .deserialize::<CellRecord>()
        .map(|r| r.map(CellFit::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::year_fraction;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn cell(strikes: &[f64], b: f64, f: f64, spread: f64) -> Vec<QuotePair> {
        let date = d("2024-01-02");
        let expiry = d("2025-01-02");
        strikes
            .iter()
            .map(|&k| {
                let put = b * (k - f).max(0.0) + 1.0;
                QuotePair {
                    market: Market::Spx,
                    date,
                    expiry,
                    strike: k,
                    call_mid: b * (f - k) + put,
                    put_mid: put,
                    call_spread: spread,
                    put_spread: spread,
                    tau: year_fraction(date, expiry),
                }
            })
            .collect()
    }

    #[test]
    fn noiseless_three_strikes() {
        let pairs = cell(&[3900.0, 4000.0, 4100.0], 0.98, 4000.0, 0.5);
        let g: Vec<f64> = pairs.iter().map(QuotePair::synthetic_forward).collect();
        assert!((g[0] - 98.0).abs() < 1e-12 && g[1].abs() < 1e-12 && (g[2] + 98.0).abs() < 1e-12);
        let fit = fit_cell(&pairs, &FitConfig::default()).unwrap();
        assert!((fit.b_hat - 0.98).abs() < 1e-12);
        assert!((fit.f_hat - 4000.0).abs() < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert_eq!(fit.n_strikes, 3);
        assert_eq!(fit.flags, CellFlags::default());
    }

    #[test]
    fn unit_change_scales_forward_only() {
        let pairs = cell(&[3900.0, 3950.0, 4000.0, 4100.0, 4200.0], 0.97, 4021.0, 0.5);
        let base = fit_cell(&pairs, &FitConfig::default()).unwrap();
        let scaled: Vec<_> = pairs
            .iter()
            .map(|p| QuotePair {
                strike: p.strike * 10.0,
                call_mid: p.call_mid * 10.0,
                put_mid: p.put_mid * 10.0,
                call_spread: p.call_spread * 10.0,
                put_spread: p.put_spread * 10.0,
                ..p.clone()
            })
            .collect();
        let s = fit_cell(&scaled, &FitConfig::default()).unwrap();
        assert!((s.b_hat - base.b_hat).abs() < 1e-13);
        assert!((s.f_hat / base.f_hat - 10.0).abs() < 1e-13);
        assert!((s.ba_med_atm - base.ba_med_atm).abs() < 1e-9);
    }

    #[test]
    fn positive_slope_rejected() {
        let mut pairs = cell(&[3900.0, 4000.0, 4100.0], 0.98, 4000.0, 0.5);
        for p in &mut pairs {
            std::mem::swap(&mut p.call_mid, &mut p.put_mid);
        }
        assert!(matches!(
            fit_cell(&pairs, &FitConfig::default()),
            Err(RejectReason::NonNegativeSlope { .. })
        ));
    }

    #[test]
    fn duplicate_strike_rejected() {
        let pairs = cell(&[4000.0, 4000.0, 4100.0], 0.98, 4000.0, 0.5);
        assert!(matches!(
            fit_cell(&pairs, &FitConfig::default()),
            Err(RejectReason::DuplicateStrike { .. })
        ));
    }

    #[test]
    fn too_few_strikes_rejected() {
        let pairs = cell(&[4000.0, 4100.0], 0.98, 4000.0, 0.5);
        assert!(matches!(
            fit_cell(&pairs, &FitConfig::default()),
            Err(RejectReason::TooFewStrikes { found: 2, required: 3 })
        ));
    }

    #[test]
    fn atm_spread_in_bp_of_discounted_forward() {
        // Only 4000 lies within 2.5% of F = 4000.
        let pairs = cell(&[3000.0, 4000.0, 5000.0], 0.98, 4000.0, 2.0);
        let fit = fit_cell(&pairs, &FitConfig::default()).unwrap();
        let expected = 1e4 * 2.0 / (4000.0 * 0.98);
        assert!((fit.ba_med_atm - expected).abs() < 1e-9);
        assert!(!fit.flags.atm_fallback);
    }

    #[test]
    fn inverse_spread_weighting_matches_on_clean_data() {
        let mut pairs = cell(&[3900.0, 4000.0, 4100.0, 4200.0], 0.95, 4050.0, 0.5);
        pairs[0].call_spread = 3.0;
        let cfg = FitConfig {
            weighting: Weighting::InverseSpread,
            ..FitConfig::default()
        };
        let fit = fit_cell(&pairs, &cfg).unwrap();
        assert!((fit.b_hat - 0.95).abs() < 1e-12);
        assert!((fit.f_hat - 4050.0).abs() < 1e-9);
    }

    #[test]
    fn extract_composes_and_sorts() {
        let long = cell(&[3900.0, 4000.0, 4100.0], 0.98, 4000.0, 0.5);
        let mut short = cell(&[3900.0, 4000.0, 4100.0], 0.99, 4010.0, 0.5);
        for p in &mut short {
            p.expiry = d("2024-06-01");
            p.tau = year_fraction(p.date, p.expiry);
        }
        let mut bad = cell(&[3900.0, 4000.0, 4100.0], 0.98, 4000.0, 0.5);
        for p in &mut bad {
            std::mem::swap(&mut p.call_mid, &mut p.put_mid);
            p.expiry = d("2024-09-01");
        }
        let out = extract_panel(&[long, bad, short], &FitConfig::default());
        assert_eq!(out.fits.len(), 2);
        assert_eq!(out.rejections.len(), 1);
        assert!(out.fits[0].tau < out.fits[1].tau);
        assert!(extract_panel(&[], &FitConfig::default()).fits.is_empty());
    }
}
