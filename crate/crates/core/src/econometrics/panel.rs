use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::carrygap::{observe, CarryGapObs, MaturityBin};
use crate::curves::{RateCurve, MAX_ZERO_JUMP};
use crate::implied_discount::CellFit;
use crate::ingest::{MacroSeries, MissingInput};
use crate::pathrisk::{gbm_term, GbmInputs};
use crate::{Benchmark, Market};

/// Shortest maturity admitted to the regression sample.
pub const MIN_REGRESSION_TAU: f64 = 1.0 / 12.0;

pub const PANEL_HEADER: [&str; 11] = [
    "market", "date", "expiry", "tau", "bin", "cg_bp", "gbm_1y", "gbm_10y", "ba_over_tau", "nfci",
    "spx_dummy",
];

/// One regression observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub market: Market,
    pub date: NaiveDate,
    pub expiry: NaiveDate,
    pub tau: f64,
    pub bin: MaturityBin,
    pub cg_bp: f64,
    pub gbm_1y: f64,
    pub gbm_10y: f64,
    pub ba_over_tau: f64,
    pub nfci: f64,
    pub spx_dummy: u8,
}

impl PanelRow {
    pub fn is_spx(&self) -> bool {
        self.spx_dummy == 1
    }
}

/// Counts of cells that did not make it into the regression panel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DropAudit {
    pub missing_curve: usize,
    pub anomalous_curve: usize,
    pub invalid_gap: usize,
    pub sub_one_month: usize,
    pub missing_rates: usize,
    pub missing_vol: usize,
    pub missing_nfci: usize,
    /// Kept, but the benchmark discount factor was extrapolated.
    pub extrapolated: usize,
}

impl DropAudit {
    pub fn dropped(&self) -> usize {
        self.missing_curve
            + self.anomalous_curve
            + self.invalid_gap
            + self.sub_one_month
            + self.missing_rates
            + self.missing_vol
            + self.missing_nfci
    }
}

#[derive(Debug, Clone, Default)]
pub struct PanelBuild {
    /// Every carry gap measured against a usable curve, sub-month included.
    pub observations: Vec<CarryGapObs>,
    pub rows: Vec<PanelRow>,
    pub audit: DropAudit,
}

/// Joins fitted cells with same-date benchmark curves and macro regressors.
pub fn build_panel(
    cells: &[CellFit],
    curves: &BTreeMap<NaiveDate, RateCurve>,
    macro_series: &MacroSeries,
    benchmark: Benchmark,
) -> PanelBuild {
    let mut out = PanelBuild::default();
    let usable: BTreeMap<NaiveDate, bool> = curves
        .iter()
        .map(|(d, c)| (*d, c.anomaly(MAX_ZERO_JUMP).is_none()))
        .collect();
    for cell in cells {
        let date = cell.key.date;
        let Some(curve) = curves.get(&date) else {
            out.audit.missing_curve += 1;
            continue;
        };
        if !usable[&date] {
            out.audit.anomalous_curve += 1;
            continue;
        }
        let Ok(obs) = observe(cell, curve) else {
            out.audit.invalid_gap += 1;
            continue;
        };
        out.observations.push(obs.clone());
        if !(cell.tau >= MIN_REGRESSION_TAU) || !obs.bin.in_regression_sample() {
            out.audit.sub_one_month += 1;
            continue;
        }
        let m = match macro_series.row(date, cell.key.market, benchmark) {
            Ok(m) => m,
            Err(missing) => {
                match missing {
                    MissingInput::Rates => out.audit.missing_rates += 1,
                    MissingInput::Vol => out.audit.missing_vol += 1,
                    MissingInput::Nfci => out.audit.missing_nfci += 1,
                }
                continue;
            }
        };
        let gbm = |rate_pct| {
            gbm_term(GbmInputs {
                rate_pct,
                vol_pct: m.vol_pct,
                tau: cell.tau,
            })
        };
        let (Ok(gbm_1y), Ok(gbm_10y)) = (gbm(m.rate_1y_pct), gbm(m.rate_10y_pct)) else {
            out.audit.missing_vol += 1;
            continue;
        };
        if obs.extrapolated {
            out.audit.extrapolated += 1;
        }
        out.rows.push(PanelRow {
            market: cell.key.market,
            date,
            expiry: cell.key.expiry,
            tau: cell.tau,
            bin: obs.bin,
            cg_bp: obs.cg_bp,
            gbm_1y,
            gbm_10y,
            ba_over_tau: obs.ba_med_over_tau,
            nfci: m.nfci,
            spx_dummy: u8::from(cell.key.market == Market::Spx),
        });
    }
    out
}

pub fn write_panel<W: Write>(writer: W, rows: &[PanelRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel<R: Read>(reader: R) -> Result<Vec<PanelRow>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}
