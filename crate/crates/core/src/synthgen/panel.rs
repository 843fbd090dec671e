use chrono::{Datelike, Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::carrygap::assign_bin;
use crate::econometrics::{predict_with, PanelRow, Regressor, Spec, MIN_REGRESSION_TAU};
use crate::ingest::{is_business_day, year_fraction};
use crate::pathrisk::{gbm_term, GbmInputs};
use crate::Market;

/// Mean, standard deviation and clamp range of one AR(1) regressor driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Range {
    const fn new(mean: f64, sd: f64, min: f64, max: f64) -> Self {
        Self { mean, sd, min, max }
    }

    fn map(&self, z: f64) -> f64 {
        (self.mean + self.sd * z).clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressorRanges {
    pub rate_1y_pct: Range,
    pub rate_10y_pct: Range,
    pub vix: Range,
    pub rvx: Range,
    pub nfci: Range,
    /// Daily median ATM spread, bp of discounted forward.
    pub ba_bp: Range,
    /// Calendar days to expiry for generated rows.
    pub min_days: u32,
    pub max_days: u32,
}

impl Default for RegressorRanges {
    fn default() -> Self {
        Self {
            rate_1y_pct: Range::new(2.0, 1.7, 0.0, 6.0),
            rate_10y_pct: Range::new(2.6, 0.9, 0.4, 5.5),
            vix: Range::new(19.0, 6.0, 9.0, 80.0),
            rvx: Range::new(24.0, 7.0, 12.0, 90.0),
            nfci: Range::new(-0.45, 0.2, -1.0, 3.0),
            ba_bp: Range::new(3.0, 1.0, 0.5, 20.0),
            min_days: 31,
            max_days: 913,
        }
    }
}

/// Per-day state of the synthetic macro environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroDay {
    pub date: NaiveDate,
    pub rate_1y_pct: f64,
    pub rate_10y_pct: f64,
    pub vix: f64,
    pub rvx: f64,
    pub nfci: f64,
    pub ba_bp: [f64; 2],
}

impl MacroDay {
    pub fn vol(&self, m: Market) -> f64 {
        match m {
            Market::Spx => self.vix,
            Market::Rut => self.rvx,
        }
    }

    pub fn ba(&self, m: Market) -> f64 {
        self.ba_bp[m as usize]
    }
}

/// Stationary unit-variance AR(1) drivers, one per macro series.
pub(crate) struct MacroPath {
    z: [f64; 7],
    rho: f64,
}

impl MacroPath {
    pub(crate) fn new(rho: f64, rng: &mut impl Rng) -> Self {
        let mut z = [0.0; 7];
        for v in &mut z {
            *v = rng.sample(StandardNormal);
        }
        Self { z, rho }
    }

    pub(crate) fn step(
        &mut self,
        date: NaiveDate,
        ranges: &RegressorRanges,
        rng: &mut impl Rng,
    ) -> MacroDay {
        let innov = (1.0 - self.rho * self.rho).sqrt();
        for v in &mut self.z {
            let e: f64 = rng.sample(StandardNormal);
            *v = self.rho * *v + innov * e;
        }
        let [r1, r10, vix, rvx_own, nfci, ba_spx, ba_rut] = self.z;
        // RVX shares most of its variation with VIX.
        let rvx = 0.8 * vix + 0.6 * rvx_own;
        MacroDay {
            date,
            rate_1y_pct: ranges.rate_1y_pct.map(r1),
            rate_10y_pct: ranges.rate_10y_pct.map(r10),
            vix: ranges.vix.map(vix),
            rvx: ranges.rvx.map(rvx),
            nfci: ranges.nfci.map(nfci),
            ba_bp: [ranges.ba_bp.map(ba_spx), ranges.ba_bp.map(ba_rut)],
        }
    }
}

/// Business days from January 1 of `start_year` through December 31 of the
/// last year, every `stride`-th one.
pub fn business_days(start_year: i32, years: u32, stride: usize) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let Some(mut d) = NaiveDate::from_ymd_opt(start_year, 1, 1) else {
        return out;
    };
    let end_year = start_year + years as i32;
    let mut k = 0usize;
    while d.year() < end_year {
        if is_business_day(d) {
            if k.is_multiple_of(stride.max(1)) {
                out.push(d);
            }
            k += 1;
        }
        d = d + Days::new(1);
    }
    out
}

/// Pooled in-sample estimates used as the default plant.
pub const TABLE2_POOLED: [(Regressor, f64); 6] = [
    (Regressor::Intercept, 24.901),
    (Regressor::SpxDummy, -0.985),
    (Regressor::Gbm1y, -0.557),
    (Regressor::Gbm10y, 0.469),
    (Regressor::BaOverTau, 0.158),
    (Regressor::Nfci, -24.598),
];

/// Pooled-specification residual RMSE, bp.
pub const TABLE2_RMSE_BP: f64 = 13.57;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPanelSpec {
    pub coefficients: Vec<(Regressor, f64)>,
    pub noise_sd_bp: f64,
    pub start_year: i32,
    pub years: u32,
    /// Rows per market per day.
    pub rows_per_day: usize,
    pub day_stride: usize,
    pub ranges: RegressorRanges,
    /// Daily AR(1) coefficient of every regressor driver.
    pub persistence: f64,
    pub seed: u64,
}

impl PlantedPanelSpec {
    /// Pooled plant with the published coefficient magnitudes and RMSE.
    pub fn table2(seed: u64) -> Self {
        Self {
            coefficients: TABLE2_POOLED.to_vec(),
            noise_sd_bp: TABLE2_RMSE_BP,
            start_year: 2016,
            years: 10,
            rows_per_day: 10,
            day_stride: 1,
            ranges: RegressorRanges::default(),
            persistence: 0.97,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.years < 3 {
            return Err(SynthError::Invalid("need at least 3 years".into()));
        }
        if !(self.noise_sd_bp >= 0.0) {
            return Err(SynthError::Invalid("noise_sd_bp must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return Err(SynthError::Invalid("persistence must lie in [0, 1)".into()));
        }
        if self.rows_per_day == 0 {
            return Err(SynthError::Invalid("rows_per_day must be positive".into()));
        }
        if f64::from(self.ranges.min_days) / crate::ingest::DAYS_PER_YEAR < MIN_REGRESSION_TAU
            || self.ranges.max_days < self.ranges.min_days
        {
            return Err(SynthError::Invalid("maturity range must start at one month".into()));
        }
        Ok(())
    }
}

/// What the generator planted, kept alongside the rows for assertions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanelTruth {
    pub coefficients: Vec<(Regressor, f64)>,
    pub noise_sd_bp: f64,
    pub seed: u64,
    /// Noise-free `cg_bp` for every row.
    #[serde(skip)]
    pub signal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub rows: Vec<PanelRow>,
    pub truth: PanelTruth,
}

/// Regression panel with known coefficients: regressors follow persistent
/// daily drivers, `cg_bp` is their planted combination plus Gaussian noise.
pub fn gen_regression_panel(s: &PlantedPanelSpec) -> Result<SyntheticPanel, SynthError> {
    s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let noise = Normal::new(0.0, s.noise_sd_bp).map_err(|e| SynthError::Invalid(e.to_string()))?;
    let mut path = MacroPath::new(s.persistence, &mut rng);
    let mut rows = Vec::new();
    let mut signal = Vec::new();
    for date in business_days(s.start_year, s.years, s.day_stride) {
        let day = path.step(date, &s.ranges, &mut rng);
        for market in Market::ALL {
            for _ in 0..s.rows_per_day {
                let days = rng.gen_range(s.ranges.min_days..=s.ranges.max_days);
                let expiry = date + Days::new(u64::from(days));
                let tau = year_fraction(date, expiry);
                let gbm = |rate_pct| {
                    gbm_term(GbmInputs {
                        rate_pct,
                        vol_pct: day.vol(market),
                        tau,
                    })
                };
                let row_noise: f64 = rng.sample(StandardNormal);
                let ba_bp = day.ba(market) * (0.2 * row_noise).exp();
                let mut row = PanelRow {
                    market,
                    date,
                    expiry,
                    tau,
                    bin: assign_bin(tau),
                    cg_bp: 0.0,
                    gbm_1y: gbm(day.rate_1y_pct)?,
                    gbm_10y: gbm(day.rate_10y_pct)?,
                    ba_over_tau: ba_bp / tau,
                    nfci: day.nfci,
                    spx_dummy: u8::from(market == Market::Spx),
                };
                let mu = predict_with(&s.coefficients, &row);
                row.cg_bp = mu + noise.sample(&mut rng);
                signal.push(mu);
                rows.push(row);
            }
        }
    }
    Ok(SyntheticPanel {
        rows,
        truth: PanelTruth {
            coefficients: s.coefficients.clone(),
            noise_sd_bp: s.noise_sd_bp,
            seed: s.seed,
            signal,
        },
    })
}

/// Planted values restricted to the regressors of `spec`.
pub fn planted_for_spec(coefs: &[(Regressor, f64)], spec: Spec) -> Vec<(Regressor, f64)> {
    spec.regressors()
        .iter()
        .map(|r| (*r, coefs.iter().find(|c| c.0 == *r).map_or(0.0, |c| c.1)))
        .collect()
}
