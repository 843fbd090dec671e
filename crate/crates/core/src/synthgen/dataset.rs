use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::cells::{gen_quote_cell, PlantedCell};
use super::panel::{business_days, MacroPath, RegressorRanges, TABLE2_POOLED, TABLE2_RMSE_BP};
use super::SynthError;
use crate::carrygap::assign_bin;
use crate::curves::{bootstrap_ois, Accrual};
use crate::econometrics::{predict_with, PanelRow, Regressor};
use crate::implied_discount::CellKey;
use crate::ingest::{
    self, write_quotes, write_tenor_series, write_value_series, year_fraction, OptionQuote,
    RawMacro, SnapshotTime, TenorQuotes,
};
use crate::pathrisk::{gbm_term, GbmInputs};
use crate::Market;

pub const OIS_TENORS: [f64; 9] = [1.0 / 12.0, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0];
pub const DGS_TENORS: [f64; 11] = [1.0 / 12.0, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 20.0, 30.0];

/// Raw-input generator: quotes for both markets plus every macro file, with
/// carry gaps planted from the regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub start_year: i32,
    pub years: u32,
    /// Quote every n-th business day; macro series cover all business days.
    pub day_stride: usize,
    pub maturities_months: Vec<f64>,
    pub n_strikes: usize,
    /// Strike spacing as a fraction of the forward.
    pub strike_spacing: f64,
    /// Noise on `C - P`, index points.
    pub parity_noise_sd: f64,
    pub coefficients: Vec<(Regressor, f64)>,
    pub noise_sd_bp: f64,
    pub ranges: RegressorRanges,
    pub persistence: f64,
    pub accrual: Accrual,
    pub spot_spx: f64,
    pub spot_rut: f64,
    pub dividend_yield: f64,
    /// Treasury CMT minus OIS, percent.
    pub dgs_basis_pct: f64,
    pub snapshot: SnapshotTime,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            start_year: 2016,
            years: 4,
            day_stride: 10,
            maturities_months: vec![0.5, 1.5, 3.0, 6.0, 9.0, 12.0, 18.0, 24.0],
            n_strikes: 20,
            strike_spacing: 0.0125,
            parity_noise_sd: 0.05,
            coefficients: TABLE2_POOLED.to_vec(),
            noise_sd_bp: TABLE2_RMSE_BP,
            ranges: RegressorRanges::default(),
            persistence: 0.97,
            accrual: Accrual::Unit,
            spot_spx: 4000.0,
            spot_rut: 2000.0,
            dividend_yield: 0.015,
            dgs_basis_pct: 0.15,
            snapshot: SnapshotTime::default(),
            seed: 7,
        }
    }
}

/// Planted values for one generated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCellRecord {
    pub market: Market,
    pub date: NaiveDate,
    pub expiry: NaiveDate,
    pub tau: f64,
    pub b_true: f64,
    pub f_true: f64,
    pub cg_bp: f64,
    pub ba_bp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub quotes: BTreeMap<Market, Vec<OptionQuote>>,
    pub raw: RawMacro,
    pub planted: Vec<PlantedCellRecord>,
}

/// Paths written by [`SyntheticDataset::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFiles {
    pub quotes_spx: PathBuf,
    pub quotes_rut: PathBuf,
    pub ois: PathBuf,
    pub dgs: PathBuf,
    pub vix: PathBuf,
    pub rvx: PathBuf,
    pub nfci: PathBuf,
    pub planted: PathBuf,
}

fn par_rate(tenor: f64, short: f64, long: f64) -> f64 {
    if tenor <= 1.0 {
        short
    } else {
        short + (long - short) * tenor.min(10.0).ln() / 10f64.ln()
    }
}

pub fn gen_dataset(spec: &DatasetSpec) -> Result<SyntheticDataset, SynthError> {
    if spec.years < 1 || spec.n_strikes < 3 || !(spec.strike_spacing > 0.0) {
        return Err(SynthError::Invalid("dataset needs a year and at least 3 strikes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let cg_noise = Normal::new(0.0, spec.noise_sd_bp).map_err(|e| SynthError::Invalid(e.to_string()))?;
    let mut path = MacroPath::new(spec.persistence, &mut rng);
    let mut raw = RawMacro::default();
    let mut quotes: BTreeMap<Market, Vec<OptionQuote>> = BTreeMap::new();
    let mut planted = Vec::new();
    let mut spot = [spec.spot_spx, spec.spot_rut];
    let spot_shock: Normal<f64> = Normal::new(0.0, 0.01).expect("valid normal");
    let mut released_nfci: Option<f64> = None;
    let mut cell_seed = spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);

    for (k, date) in business_days(spec.start_year, spec.years, 1).into_iter().enumerate() {
        let day = path.step(date, &spec.ranges, &mut rng);
        for s in &mut spot {
            *s *= spot_shock.sample(&mut rng).exp();
        }
        let ois: TenorQuotes = OIS_TENORS
            .iter()
            .map(|&t| (t, par_rate(t, day.rate_1y_pct, day.rate_10y_pct)))
            .collect();
        let dgs: TenorQuotes = DGS_TENORS
            .iter()
            .map(|&t| (t, par_rate(t, day.rate_1y_pct, day.rate_10y_pct) + spec.dgs_basis_pct))
            .collect();
        raw.ois.insert(date, ois.clone());
        raw.dgs.insert(date, dgs);
        raw.vix.insert(date, day.vix);
        raw.rvx.insert(date, day.rvx);
        if date.weekday() == Weekday::Fri {
            raw.nfci.insert(date, day.nfci);
            released_nfci = Some(day.nfci);
        }
        let Some(nfci) = released_nfci else { continue };
        if k % spec.day_stride.max(1) != 0 {
            continue;
        }

        let curve = bootstrap_ois(date, &ois, spec.accrual)?;
        for market in Market::ALL {
            let s0 = spot[market as usize];
            for &months in &spec.maturities_months {
                let expiry = date + Days::new((months * 30.4375).round().max(1.0) as u64);
                let tau = year_fraction(date, expiry);
                let d_ois = curve.discount_at(tau)?.df;
                let f_true = s0 * ((day.rate_1y_pct / 100.0 - spec.dividend_yield) * tau).exp();
                let ba_bp = day.ba(market);
                let gbm = |rate_pct| {
                    gbm_term(GbmInputs {
                        rate_pct,
                        vol_pct: day.vol(market),
                        tau,
                    })
                };
                let row = PanelRow {
                    market,
                    date,
                    expiry,
                    tau,
                    bin: assign_bin(tau),
                    cg_bp: 0.0,
                    gbm_1y: gbm(day.rate_1y_pct)?,
                    gbm_10y: gbm(day.rate_10y_pct)?,
                    ba_over_tau: ba_bp / tau,
                    nfci,
                    spx_dummy: u8::from(market == Market::Spx),
                };
                let cg_bp = predict_with(&spec.coefficients, &row) + cg_noise.sample(&mut rng);
                let b_true = d_ois * (-cg_bp / 1e4 * tau).exp();
                let half_spread = ba_bp * f_true * b_true / 2e4;
                let centre = (spec.n_strikes as f64 - 1.0) / 2.0;
                let step = (f_true * spec.strike_spacing / 5.0).round().max(1.0) * 5.0;
                let atm = (f_true / 5.0).round() * 5.0;
                let strikes = (0..spec.n_strikes)
                    .map(|i| atm + (i as f64 - centre).round() * step)
                    .collect::<Vec<_>>();
                cell_seed = cell_seed.wrapping_add(1);
                let cell = PlantedCell {
                    b_true,
                    f_true,
                    strikes: dedup_strikes(strikes, step),
                    half_spread,
                    noise_sd: spec.parity_noise_sd,
                    cushion: 10.0 * half_spread + 1.0,
                    seed: cell_seed,
                };
                let key = CellKey { market, date, expiry };
                let generated = gen_quote_cell(&cell, key)?;
                let out = quotes.entry(market).or_default();
                for p in &generated.pairs {
                    out.extend(p.to_quotes(spec.snapshot));
                }
                planted.push(PlantedCellRecord {
                    market,
                    date,
                    expiry,
                    tau,
                    b_true,
                    f_true,
                    cg_bp,
                    ba_bp,
                });
            }
        }
    }
    Ok(SyntheticDataset { quotes, raw, planted })
}

/// Strike grids built from rounded offsets can collide; nudge collisions upward.
fn dedup_strikes(mut strikes: Vec<f64>, step: f64) -> Vec<f64> {
    strikes.sort_by(f64::total_cmp);
    for i in 1..strikes.len() {
        if strikes[i] <= strikes[i - 1] {
            strikes[i] = strikes[i - 1] + step;
        }
    }
    strikes
}

impl SyntheticDataset {
    /// Writes every input file in the ingest schemas.
    pub fn write(&self, dir: &Path) -> Result<DatasetFiles, SynthError> {
        std::fs::create_dir_all(dir)?;
        let files = DatasetFiles {
            quotes_spx: dir.join("quotes_spx.csv"),
            quotes_rut: dir.join("quotes_rut.csv"),
            ois: dir.join("ois.csv"),
            dgs: dir.join("dgs.csv"),
            vix: dir.join("vix.csv"),
            rvx: dir.join("rvx.csv"),
            nfci: dir.join("nfci.csv"),
            planted: dir.join("planted_cells.csv"),
        };
        let create = |p: &Path| -> Result<BufWriter<File>, SynthError> { Ok(BufWriter::new(File::create(p)?)) };
        let empty = Vec::new();
        write_quotes(create(&files.quotes_spx)?, self.quotes.get(&Market::Spx).unwrap_or(&empty))?;
        write_quotes(create(&files.quotes_rut)?, self.quotes.get(&Market::Rut).unwrap_or(&empty))?;
        write_tenor_series(create(&files.ois)?, &self.raw.ois)?;
        write_tenor_series(create(&files.dgs)?, &self.raw.dgs)?;
        write_value_series(create(&files.vix)?, &self.raw.vix)?;
        write_value_series(create(&files.rvx)?, &self.raw.rvx)?;
        write_value_series(create(&files.nfci)?, &self.raw.nfci)?;
        let mut w = csv::Writer::from_writer(create(&files.planted)?);
        for p in &self.planted {
            w.serialize(p).map_err(ingest::IngestError::from)?;
        }
        w.flush()?;
        Ok(files)
    }
}
