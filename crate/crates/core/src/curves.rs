//! Benchmark discount curves.
//!
//! OIS curves are bootstrapped from par quotes: tenors up to one year are
//! single-period simple-accrual instruments, longer tenors are annual-pay
//! fixed legs solved sequentially. DGS curves read constant-maturity yields
//! as continuously compounded zero rates. Both expose the same
//! [`RateCurve::discount_at`].

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ingest::DAYS_PER_YEAR;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurveError {
    #[error("no rate quotes")]
    Empty,
    #[error("tenors must be strictly increasing (tenor {tenor} follows {previous})")]
    NonMonotoneTenors { previous: f64, tenor: f64 },
    #[error("tenor {0} is not positive")]
    NonPositiveTenor(f64),
    #[error("no tenor at or below one year")]
    NoShortTenor,
    #[error("need at least {required} tenors, found {found}")]
    TooFewPillars { required: usize, found: usize },
    #[error("bootstrap produced a non-positive discount factor at tenor {tenor}")]
    NonPositiveDf { tenor: f64 },
    #[error("negative year fraction {0}")]
    NegativeTau(f64),
    #[error("malformed curve file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CurveKind {
    Ois,
    Dgs,
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveKind::Ois => "OIS",
            CurveKind::Dgs => "DGS",
        })
    }
}

impl FromStr for CurveKind {
    type Err = CurveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "OIS" => Ok(CurveKind::Ois),
            "DGS" => Ok(CurveKind::Dgs),
            other => Err(CurveError::Format(format!("unknown curve kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// `ln df` linear in tau; `(0, 1)` is an implicit node.
    LogLinearDf,
    /// Zero rate linear in tau, flat before the first pillar.
    LinearZero,
}

impl CurveKind {
    pub fn interpolation(self) -> Interpolation {
        match self {
            CurveKind::Ois => Interpolation::LogLinearDf,
            CurveKind::Dgs => Interpolation::LinearZero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pillar {
    pub tau: f64,
    pub df: f64,
}

impl Pillar {
    pub fn zero_rate(&self) -> f64 {
        -self.df.ln() / self.tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub as_of: NaiveDate,
    pub kind: CurveKind,
    pillars: Vec<Pillar>,
    interpolation: Interpolation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discount {
    pub df: f64,
    /// Beyond the last pillar: flat continuously compounded zero rate.
    pub extrapolated: bool,
}

impl RateCurve {
    /// Builds a curve from pillars with strictly increasing positive taus.
    pub fn from_pillars(
        as_of: NaiveDate,
        kind: CurveKind,
        pillars: Vec<Pillar>,
    ) -> Result<Self, CurveError> {
        if pillars.is_empty() {
            return Err(CurveError::Empty);
        }
        check_tenors(pillars.iter().map(|p| p.tau))?;
        if let Some(p) = pillars.iter().find(|p| !(p.df > 0.0)) {
            return Err(CurveError::NonPositiveDf { tenor: p.tau });
        }
        Ok(Self {
            as_of,
            kind,
            pillars,
            interpolation: kind.interpolation(),
        })
    }

    pub fn pillars(&self) -> &[Pillar] {
        &self.pillars
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn last_tau(&self) -> f64 {
        self.pillars[self.pillars.len() - 1].tau
    }

    pub fn discount_at(&self, tau: f64) -> Result<Discount, CurveError> {
        if tau < 0.0 || tau.is_nan() {
            return Err(CurveError::NegativeTau(tau));
        }
        if tau == 0.0 {
            return Ok(Discount {
                df: 1.0,
                extrapolated: false,
            });
        }
        let last = self.pillars[self.pillars.len() - 1];
        if tau > last.tau {
            return Ok(Discount {
                df: (-last.zero_rate() * tau).exp(),
                extrapolated: true,
            });
        }
        let idx = self.pillars.partition_point(|p| p.tau < tau);
        let hi = self.pillars[idx];
        if hi.tau == tau {
            return Ok(Discount {
                df: hi.df,
                extrapolated: false,
            });
        }
        let df = match self.interpolation {
            Interpolation::LogLinearDf => {
                let lo = if idx == 0 {
                    Pillar { tau: 0.0, df: 1.0 }
                } else {
                    self.pillars[idx - 1]
                };
                log_linear(lo, hi, tau)
            }
            Interpolation::LinearZero => {
                let z = if idx == 0 {
                    hi.zero_rate()
                } else {
                    let lo = self.pillars[idx - 1];
                    let w = (tau - lo.tau) / (hi.tau - lo.tau);
                    lo.zero_rate() + w * (hi.zero_rate() - lo.zero_rate())
                };
                (-z * tau).exp()
            }
        };
        Ok(Discount {
            df,
            extrapolated: false,
        })
    }

    /// Continuously compounded zero rate `-ln(df) / tau`.
    pub fn zero_rate(&self, tau: f64) -> Result<f64, CurveError> {
        if tau <= 0.0 {
            return Err(CurveError::NegativeTau(tau));
        }
        Ok(-self.discount_at(tau)?.df.ln() / tau)
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.pillars.windows(2).all(|w| w[1].df <= w[0].df) && self.pillars[0].df <= 1.0
    }

    /// Reason the term structure is unusable, if any: a non-positive
    /// discount factor or a zero-rate jump above `max_jump` (decimal) between
    /// adjacent pillars.
    pub fn anomaly(&self, max_jump: f64) -> Option<String> {
        if let Some(p) = self.pillars.iter().find(|p| !(p.df > 0.0)) {
            return Some(format!("non-positive df at tau {}", p.tau));
        }
        self.pillars.windows(2).find_map(|w| {
            let jump = (w[1].zero_rate() - w[0].zero_rate()).abs();
            (jump > max_jump).then(|| {
                format!(
                    "zero-rate jump of {:.1} bp between tau {} and {}",
                    jump * 1e4,
                    w[0].tau,
                    w[1].tau
                )
            })
        })
    }
}

/// Zero-rate jump between adjacent pillars beyond which a date is dropped.
pub const MAX_ZERO_JUMP: f64 = 0.02;

fn log_linear(lo: Pillar, hi: Pillar, tau: f64) -> f64 {
    let w = (tau - lo.tau) / (hi.tau - lo.tau);
    (lo.df.ln() * (1.0 - w) + hi.df.ln() * w).exp()
}

fn check_tenors(tenors: impl Iterator<Item = f64>) -> Result<(), CurveError> {
    let mut previous = None;
    for tenor in tenors {
        if !(tenor > 0.0) {
            return Err(CurveError::NonPositiveTenor(tenor));
        }
        if let Some(prev) = previous {
            if tenor <= prev {
                return Err(CurveError::NonMonotoneTenors {
                    previous: prev,
                    tenor,
                });
            }
        }
        previous = Some(tenor);
    }
    Ok(())
}

/// Accrual fraction for a period measured in years of 365.25 days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accrual {
    /// One year accrues exactly 1.0.
    #[default]
    Unit,
    /// Actual days over 360.
    Act360,
}

impl Accrual {
    pub fn fraction(self, years: f64) -> f64 {
        match self {
            Accrual::Unit => years,
            Accrual::Act360 => years * DAYS_PER_YEAR / 360.0,
        }
    }
}

const PAYMENT_EPS: f64 = 1e-9;

/// Bootstraps an OIS discount curve from `(tenor_years, par_rate_pct)`.
pub fn bootstrap_ois(
    as_of: NaiveDate,
    par_quotes: &[(f64, f64)],
    accrual: Accrual,
) -> Result<RateCurve, CurveError> {
    if par_quotes.is_empty() {
        return Err(CurveError::Empty);
    }
    check_tenors(par_quotes.iter().map(|q| q.0))?;
    if par_quotes[0].0 > 1.0 {
        return Err(CurveError::NoShortTenor);
    }

    let mut pillars: Vec<Pillar> = Vec::with_capacity(par_quotes.len());
    for &(tenor, rate_pct) in par_quotes {
        let r = rate_pct / 100.0;
        let df = if tenor <= 1.0 {
            1.0 / (1.0 + r * accrual.fraction(tenor))
        } else {
            solve_swap_pillar(&pillars, tenor, r, accrual)?
        };
        if !(df > 0.0) || !df.is_finite() {
            return Err(CurveError::NonPositiveDf { tenor });
        }
        pillars.push(Pillar { tau: tenor, df });
    }
    RateCurve::from_pillars(as_of, CurveKind::Ois, pillars)
}

/// Payment times of an annual fixed leg ending at `tenor`, rolled back from
/// maturity; a short front stub absorbs any fractional year.
fn payment_schedule(tenor: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let mut t = tenor;
    while t > PAYMENT_EPS {
        times.push(t);
        t -= 1.0;
    }
    times.reverse();
    times
}

/// Solves the par condition `r * sum(alpha_k df_k) + df_n = 1` for the new
/// pillar's discount factor. Payment dates between the last known pillar and
/// the new one are log-linear in the unknown, so gaps over one year need a
/// root search; otherwise the closed form applies.
fn solve_swap_pillar(
    known: &[Pillar],
    tenor: f64,
    r: f64,
    accrual: Accrual,
) -> Result<f64, CurveError> {
    let last = known.last().copied().unwrap_or(Pillar { tau: 0.0, df: 1.0 });
    let times = payment_schedule(tenor);
    let n = times.len();
    let alphas: Vec<f64> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| accrual.fraction(t - if i == 0 { 0.0 } else { times[i - 1] }))
        .collect();

    let mut fixed_annuity = 0.0;
    // (accrual, interpolation weight on the unknown) for dates past the last pillar.
    let mut pending: Vec<(f64, f64)> = Vec::new();
    for k in 0..n - 1 {
        let t = times[k];
        if t <= last.tau + PAYMENT_EPS {
            let df = interpolate_known(known, t);
            fixed_annuity += alphas[k] * df;
        } else {
            pending.push((alphas[k], (t - last.tau) / (tenor - last.tau)));
        }
    }
    let alpha_n = alphas[n - 1];

    if pending.is_empty() {
        return Ok((1.0 - r * fixed_annuity) / (1.0 + r * alpha_n));
    }

    let par_gap = |x: f64| {
        let interp: f64 = pending
            .iter()
            .map(|(a, w)| a * last.df.powf(1.0 - w) * x.powf(*w))
            .sum();
        r * (fixed_annuity + interp) + (1.0 + r * alpha_n) * x - 1.0
    };
    let mut lo = f64::MIN_POSITIVE;
    let mut hi = 2.0;
    let g_lo = par_gap(lo);
    let mut g_hi = par_gap(hi);
    let mut tries = 0;
    while g_hi.signum() == g_lo.signum() && tries < 60 {
        hi *= 2.0;
        g_hi = par_gap(hi);
        tries += 1;
    }
    if g_hi.signum() == g_lo.signum() {
        return Err(CurveError::NonPositiveDf { tenor });
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if par_gap(mid).signum() == g_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn interpolate_known(known: &[Pillar], t: f64) -> f64 {
    let idx = known.partition_point(|p| p.tau < t - PAYMENT_EPS);
    match known.get(idx) {
        Some(p) if (p.tau - t).abs() <= PAYMENT_EPS => p.df,
        Some(&hi) => {
            let lo = if idx == 0 {
                Pillar { tau: 0.0, df: 1.0 }
            } else {
                known[idx - 1]
            };
            log_linear(lo, hi, t)
        }
        None => unreachable!("payment date beyond the known curve"),
    }
}

/// Treasury constant-maturity curve: each yield is read as a continuously
/// compounded zero rate, `df = exp(-y tau)`, interpolated linearly in yield.
pub fn build_dgs_curve(as_of: NaiveDate, yields: &[(f64, f64)]) -> Result<RateCurve, CurveError> {
    if yields.len() < 2 {
        return Err(CurveError::TooFewPillars {
            required: 2,
            found: yields.len(),
        });
    }
    check_tenors(yields.iter().map(|q| q.0))?;
    let pillars = yields
        .iter()
        .map(|&(tau, pct)| Pillar {
            tau,
            df: (-(pct / 100.0) * tau).exp(),
        })
        .collect();
    RateCurve::from_pillars(as_of, CurveKind::Dgs, pillars)
}

pub const CURVES_HEADER: [&str; 5] = ["date", "kind", "tau", "df", "zero_rate"];

/// Writes pillar rows of every curve as `date,kind,tau,df,zero_rate`.
pub fn write_curves<'a, W: Write>(
    writer: W,
    curves: impl IntoIterator<Item = &'a RateCurve>,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CURVES_HEADER)?;
    for c in curves {
        for p in &c.pillars {
            w.write_record([
                c.as_of.to_string(),
                c.kind.to_string(),
                p.tau.to_string(),
                p.df.to_string(),
                p.zero_rate().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub type CurveSet = BTreeMap<(NaiveDate, CurveKind), RateCurve>;

/// Reads a `curves.csv` back into curves keyed by `(date, kind)`.
pub fn read_curves<R: Read>(reader: R) -> Result<CurveSet, CurveError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CurveError::Format(e.to_string()))?
        .clone();
    if headers.iter().ne(CURVES_HEADER) {
        return Err(CurveError::Format(format!(
            "expected header `{}`, found `{}`",
            CURVES_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut pillars: BTreeMap<(NaiveDate, CurveKind), Vec<Pillar>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CurveError::Format(e.to_string()))?;
        let bad = || CurveError::Format(format!("bad row {:?}", rec));
        let date = crate::ingest::parse_date(&rec[0]).ok_or_else(bad)?;
        let kind: CurveKind = rec[1].parse()?;
        let tau: f64 = rec[2].parse().map_err(|_| bad())?;
        let df: f64 = rec[3].parse().map_err(|_| bad())?;
        pillars.entry((date, kind)).or_default().push(Pillar { tau, df });
    }
    pillars
        .into_iter()
        .map(|((date, kind), p)| Ok(((date, kind), RateCurve::from_pillars(date, kind, p)?)))
        .collect()
}
