use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::linalg::{least_squares, sandwich, DesignMatrix, RankDeficient};
use super::panel::PanelRow;
use super::EconError;
use crate::carrygap::MaturityBin;
use crate::stats::mean;
use crate::{Benchmark, Market};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spec {
    /// Both markets, common slopes, SPX level dummy.
    Pooled,
    #[serde(rename = "spx")]
    SpxOnly,
    #[serde(rename = "rut")]
    RutOnly,
}

impl Spec {
    pub const ALL: [Spec; 3] = [Spec::Pooled, Spec::SpxOnly, Spec::RutOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Spec::Pooled => "pooled",
            Spec::SpxOnly => "spx",
            Spec::RutOnly => "rut",
        }
    }

    pub fn regressors(self) -> &'static [Regressor] {
        use Regressor::*;
        match self {
            Spec::Pooled => &[Intercept, SpxDummy, Gbm1y, Gbm10y, BaOverTau, Nfci],
            Spec::SpxOnly | Spec::RutOnly => &[Intercept, Gbm1y, Gbm10y, BaOverTau, Nfci],
        }
    }

    pub fn includes(self, market: Market) -> bool {
        match self {
            Spec::Pooled => true,
            Spec::SpxOnly => market == Market::Spx,
            Spec::RutOnly => market == Market::Rut,
        }
    }

    pub fn markets(self) -> &'static [Market] {
        match self {
            Spec::Pooled => &Market::ALL,
            Spec::SpxOnly => &[Market::Spx],
            Spec::RutOnly => &[Market::Rut],
        }
    }
}

impl fmt::Display for Spec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Spec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pooled" => Ok(Spec::Pooled),
            "spx" => Ok(Spec::SpxOnly),
            "rut" => Ok(Spec::RutOnly),
            other => Err(format!("unknown spec `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressor {
    Intercept,
    SpxDummy,
    #[serde(rename = "gbm_1y")]
    Gbm1y,
    #[serde(rename = "gbm_10y")]
    Gbm10y,
    BaOverTau,
    Nfci,
}

impl Regressor {
    pub const ALL: [Regressor; 6] = [
        Regressor::Intercept,
        Regressor::SpxDummy,
        Regressor::Gbm1y,
        Regressor::Gbm10y,
        Regressor::BaOverTau,
        Regressor::Nfci,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regressor::Intercept => "intercept",
            Regressor::SpxDummy => "spx_dummy",
            Regressor::Gbm1y => "gbm_1y",
            Regressor::Gbm10y => "gbm_10y",
            Regressor::BaOverTau => "ba_over_tau",
            Regressor::Nfci => "nfci",
        }
    }

    pub fn value(self, row: &PanelRow) -> f64 {
        match self {
            Regressor::Intercept => 1.0,
            Regressor::SpxDummy => f64::from(row.spx_dummy),
            Regressor::Gbm1y => row.gbm_1y,
            Regressor::Gbm10y => row.gbm_10y,
            Regressor::BaOverTau => row.ba_over_tau,
            Regressor::Nfci => row.nfci,
        }
    }
}

impl fmt::Display for Regressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term {
    pub regressor: Regressor,
    pub estimate: f64,
    /// `None` when only one date cluster exists.
    pub clustered_se: Option<f64>,
    pub t_stat: Option<f64>,
    /// Two-sided, standard normal reference.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelErrorDiag {
    /// Mean over dates of the within-date mean of `(fitted - actual) / actual`.
    pub daily_mean_rel_err: f64,
    pub mean_abs_rel_err: f64,
    pub n_days: usize,
    pub excluded_zero_actual: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFit {
    pub spec: Spec,
    pub benchmark: Benchmark,
    pub terms: Vec<Term>,
    pub r2: f64,
    pub adj_r2: f64,
    pub rmse_bp: f64,
    pub mae_bp: f64,
    pub n_obs: usize,
    pub n_days: usize,
    pub per_bin_r2: BTreeMap<MaturityBin, Option<f64>>,
    /// Per-market bucket fit; for single-market specs this repeats `per_bin_r2`.
    pub per_market_bin_r2: BTreeMap<Market, BTreeMap<MaturityBin, Option<f64>>>,
    pub rel_err: Option<RelErrorDiag>,
    /// Clustered covariance in `terms` order, if available.
    #[serde(skip)]
    pub covariance: Option<Vec<Vec<f64>>>,
}

impl RegressionFit {
    pub fn coefficient(&self, r: Regressor) -> Option<f64> {
        self.terms.iter().find(|t| t.regressor == r).map(|t| t.estimate)
    }

    pub fn clustered_se(&self, r: Regressor) -> Option<f64> {
        self.terms
            .iter()
            .find(|t| t.regressor == r)
            .and_then(|t| t.clustered_se)
    }

    pub fn predict(&self, row: &PanelRow) -> f64 {
        predict_with(&self.coefficients(), row)
    }

    pub fn coefficients(&self) -> Vec<(Regressor, f64)> {
        self.terms.iter().map(|t| (t.regressor, t.estimate)).collect()
    }
}

pub fn predict_with(coefs: &[(Regressor, f64)], row: &PanelRow) -> f64 {
    coefs.iter().map(|(r, b)| b * r.value(row)).sum()
}

/// Rows of `rows` that belong to `spec`'s sample.
pub fn spec_rows(rows: &[PanelRow], spec: Spec) -> Vec<&PanelRow> {
    rows.iter().filter(|r| spec.includes(r.market)).collect()
}

pub fn design_matrix(rows: &[&PanelRow], regressors: &[Regressor]) -> DesignMatrix {
    DesignMatrix::from_columns(
        regressors
            .iter()
            .map(|r| rows.iter().map(|row| r.value(row)).collect())
            .collect(),
    )
}

/// Cluster-robust covariance `c (X'X)^-1 [sum_g s_g s_g'] (X'X)^-1` with
/// `s_g = X_g' e_g` and `c = G/(G-1) (N-1)/(N-k)`. `None` for a single cluster.
pub fn clustered_covariance<C: Ord + Clone>(
    x: &DesignMatrix,
    resid: &[f64],
    clusters: &[C],
    xtx_inv: &[Vec<f64>],
) -> Option<Vec<Vec<f64>>> {
    let k = x.ncols();
    let n = x.nrows();
    let mut scores: BTreeMap<C, Vec<f64>> = BTreeMap::new();
    for i in 0..n {
        let s = scores
            .entry(clusters[i].clone())
            .or_insert_with(|| vec![0.0; k]);
        for (j, sj) in s.iter_mut().enumerate() {
            *sj += x.get(i, j) * resid[i];
        }
    }
    let g = scores.len();
    if g < 2 || n <= k {
        return None;
    }
    let mut meat = vec![vec![0.0; k]; k];
    for s in scores.values() {
        for a in 0..k {
            for b in 0..k {
                meat[a][b] += s[a] * s[b];
            }
        }
    }
    let scale = g as f64 / (g - 1) as f64 * (n - 1) as f64 / (n - k) as f64;
    let mut v = sandwich(xtx_inv, &meat);
    for row in &mut v {
        for e in row.iter_mut() {
            *e *= scale;
        }
    }
    Some(v)
}

/// Coefficients only, for LOYO refits.
pub fn fit_coefficients(rows: &[&PanelRow], spec: Spec) -> Result<Vec<(Regressor, f64)>, EconError> {
    let regs = spec.regressors();
    check_size(rows.len(), regs.len())?;
    let x = design_matrix(rows, regs);
    let y: Vec<f64> = rows.iter().map(|r| r.cg_bp).collect();
    let ls = least_squares(&x, &y).map_err(|RankDeficient(j)| EconError::RankDeficient {
        column: regs[j].name(),
    })?;
    Ok(regs.iter().copied().zip(ls.beta).collect())
}

fn check_size(n: usize, k: usize) -> Result<(), EconError> {
    if n < k + 2 {
        Err(EconError::TooFewRows { rows: n, params: k })
    } else {
        Ok(())
    }
}

/// Least-squares fit of `spec` with date-clustered standard errors and all
/// in-sample diagnostics.
pub fn fit_ols(rows: &[PanelRow], spec: Spec, benchmark: Benchmark) -> Result<RegressionFit, EconError> {
    let sample = spec_rows(rows, spec);
    let regs = spec.regressors();
    let k = regs.len();
    check_size(sample.len(), k)?;
    let x = design_matrix(&sample, regs);
    let y: Vec<f64> = sample.iter().map(|r| r.cg_bp).collect();
    let ls = least_squares(&x, &y).map_err(|RankDeficient(j)| EconError::RankDeficient {
        column: regs[j].name(),
    })?;
    let fitted = x.mul_vec(&ls.beta);
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, f)| a - f).collect();
    let dates: Vec<NaiveDate> = sample.iter().map(|r| r.date).collect();
    let cov = clustered_covariance(&x, &resid, &dates, &ls.xtx_inv);

    let terms = regs
        .iter()
        .enumerate()
        .map(|(j, &regressor)| {
            let estimate = ls.beta[j];
            let se = cov.as_ref().map(|v| v[j][j].max(0.0).sqrt());
            let t = se.filter(|s| *s > 0.0).map(|s| estimate / s);
            Term {
                regressor,
                estimate,
                clustered_se: se,
                t_stat: t,
                p_value: t.map(|t| erfc(t.abs() / std::f64::consts::SQRT_2)),
            }
        })
        .collect();

    let n = sample.len();
    let y_mean = mean(&y).unwrap_or(0.0);
    let sse: f64 = resid.iter().map(|e| e * e).sum();
    let sst: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN };
    let adj_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - k) as f64;
    let n_days = dates.iter().collect::<BTreeSet<_>>().len();

    let mut fit = RegressionFit {
        spec,
        benchmark,
        terms,
        r2,
        adj_r2,
        rmse_bp: (sse / n as f64).sqrt(),
        mae_bp: resid.iter().map(|e| e.abs()).sum::<f64>() / n as f64,
        n_obs: n,
        n_days,
        per_bin_r2: BTreeMap::new(),
        per_market_bin_r2: BTreeMap::new(),
        rel_err: None,
        covariance: cov,
    };
    fit.per_bin_r2 = binned_fit(rows, &fit);
    for &m in spec.markets() {
        let market_rows: Vec<PanelRow> = rows.iter().filter(|r| r.market == m).cloned().collect();
        fit.per_market_bin_r2.insert(m, binned_fit(&market_rows, &fit));
    }
    fit.rel_err = rel_error_diag(rows, &fit);
    Ok(fit)
}

/// Buckets with fewer rows report `None`.
pub const MIN_BIN_ROWS: usize = 10;

/// Per-maturity-bucket `1 - SSE/SST`, SST around the bucket's own mean.
/// `None` for thin buckets and buckets with constant actuals.
pub fn binned_fit(rows: &[PanelRow], fit: &RegressionFit) -> BTreeMap<MaturityBin, Option<f64>> {
    let coefs = fit.coefficients();
    let mut groups: BTreeMap<MaturityBin, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| fit.spec.includes(r.market)) {
        groups
            .entry(r.bin)
            .or_default()
            .push((r.cg_bp, predict_with(&coefs, r)));
    }
    groups
        .into_iter()
        .map(|(bin, pairs)| {
            if pairs.len() < MIN_BIN_ROWS {
                return (bin, None);
            }
            let m = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
            let sst: f64 = pairs.iter().map(|(a, _)| (a - m).powi(2)).sum();
            let sse: f64 = pairs.iter().map(|(a, f)| (a - f).powi(2)).sum();
            (bin, (sst > 0.0).then(|| 1.0 - sse / sst))
        })
        .collect()
}

/// Relative fit error averaged within date, then across dates. Rows with a
/// zero actual are excluded and counted.
pub fn rel_error_diag(rows: &[PanelRow], fit: &RegressionFit) -> Option<RelErrorDiag> {
    let coefs = fit.coefficients();
    let mut excluded = 0;
    let mut by_date: BTreeMap<NaiveDate, (f64, f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| fit.spec.includes(r.market)) {
        if r.cg_bp == 0.0 {
            excluded += 1;
            continue;
        }
        let rel = (predict_with(&coefs, r) - r.cg_bp) / r.cg_bp;
        let e = by_date.entry(r.date).or_default();
        e.0 += rel;
        e.1 += rel.abs();
        e.2 += 1;
    }
    if by_date.is_empty() {
        return None;
    }
    let days = by_date.len() as f64;
    let (signed, abs) = by_date
        .values()
        .fold((0.0, 0.0), |(s, a), (rs, ra, n)| (s + rs / *n as f64, a + ra / *n as f64));
    Some(RelErrorDiag {
        daily_mean_rel_err: signed / days,
        mean_abs_rel_err: abs / days,
        n_days: by_date.len(),
        excluded_zero_actual: excluded,
    })
}
