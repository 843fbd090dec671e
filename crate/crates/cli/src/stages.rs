use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use carrygap_core::carrygap::{
    aggregate_daily, aggregate_daily_pooled, distribution_stats, maturity_profile,
    write_carrygap_panel, write_daily_medians, yearly_profile, BinSummary, DistributionStats,
    YearSummary,
};
use carrygap_core::curves::{
    bootstrap_ois, build_dgs_curve, read_curves, write_curves, CurveKind, RateCurve, CURVES_HEADER,
    MAX_ZERO_JUMP,
};
use carrygap_core::econometrics::{
    fit_ols, read_panel, run_loyo, write_loyo, write_panel, write_sign_table, DropAudit,
    LoyoReport, PanelRow, Spec, PANEL_HEADER,
};
use carrygap_core::implied_discount::{
    extract_panel, read_cells, write_cells, CellRejection, FitConfig, CELLS_HEADER,
};
use carrygap_core::ingest::{
    align_macro, apply_filters, load_quotes, pair_quotes, partition_by_day, FilterCounts,
    MacroFiles, QuotePair, SeriesWarnings, TenorQuotes,
};
use carrygap_core::pathrisk::{mc_check, McCheckReport, SupportSimConfig};
use carrygap_core::synthgen::{gen_dataset, gen_regression_panel, DatasetSpec, PlantedPanelSpec};
use carrygap_core::{Benchmark, Market};
use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Inputs, Need, RunConfig};
use crate::manifest::{write_manifest, PARTIAL_MARKER};
use crate::CliError;

pub const CELLS_FILE: &str = "cells.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const CARRYGAP_FILE: &str = "carrygap_panel.csv";
pub const DAILY_FILE: &str = "daily_median.csv";
pub const DIST_FILE: &str = "dist_stats.json";
pub const SIGN_TABLE_FILE: &str = "sign_table.csv";
pub const PATHRISK_FILE: &str = "pathrisk_check.json";

pub fn panel_file(bm: Benchmark) -> String {
    format!("panel_{}.csv", bm.as_str())
}

pub fn fit_file(spec: Spec, bm: Benchmark) -> String {
    format!("fit_{}_{}.json", spec.as_str(), bm.as_str())
}

pub fn loyo_file(spec: Spec, bm: Benchmark) -> String {
    format!("loyo_{}_{}.csv", spec.as_str(), bm.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Extract,
    Bootstrap,
    Panel,
    Regress,
    Loyo,
    McCheck,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Bootstrap => "bootstrap",
            Stage::Panel => "panel",
            Stage::Regress => "regress",
            Stage::Loyo => "loyo",
            Stage::McCheck => "mc-check",
        }
    }

    pub fn needs(self) -> &'static [Need] {
        match self {
            Stage::Extract => &[Need::Quotes],
            Stage::Bootstrap => &[Need::Rates],
            Stage::Panel => &[Need::Regressors],
            Stage::Regress | Stage::Loyo | Stage::McCheck => &[],
        }
    }

    /// Runs this stage alone against the artifacts in the output directory.
    /// Returns the names of the files it wrote.
    pub fn run(self, cfg: &RunConfig) -> Result<Vec<String>, CliError> {
        match self {
            Stage::Extract => extract(cfg),
            Stage::Bootstrap => bootstrap(cfg),
            Stage::Panel => panel(cfg),
            Stage::Regress => regress(cfg),
            Stage::Loyo => loyo(cfg),
            Stage::McCheck => mc_check_stage(cfg).map(|(files, _)| files),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    Ok(BufReader::new(File::open(path).map_err(io_err(path))?))
}

fn csv_out<T>(path: &Path, f: impl FnOnce(BufWriter<File>) -> Result<T, csv::Error>) -> Result<T, CliError> {
    f(create(path)?).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Compares the header of an upstream artifact with the columns this stage
/// expects and reports the difference.
pub fn check_columns(path: &Path, expected: &[&str]) -> Result<(), CliError> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let found: Vec<String> = rdr
        .headers()
        .map_err(|source| CliError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let missing: Vec<String> = expected
        .iter()
        .filter(|c| !found.iter().any(|f| f == *c))
        .map(|c| c.to_string())
        .collect();
    let unexpected: Vec<String> = found
        .iter()
        .filter(|f| !expected.contains(&f.as_str()))
        .cloned()
        .collect();
    if missing.is_empty() && unexpected.is_empty() {
        Ok(())
    } else {
        Err(CliError::Schema {
            path: path.to_path_buf(),
            missing,
            unexpected,
        })
    }
}

fn upstream(cfg: &RunConfig, name: &str, expected: &[&str]) -> Result<PathBuf, CliError> {
    let path = cfg.out_dir.join(name);
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "{} not found; run the stage that produces it first",
            path.display()
        )));
    }
    check_columns(&path, expected)?;
    Ok(path)
}

#[derive(Debug, Default, Serialize)]
struct ExtractAudit {
    quotes_loaded: BTreeMap<Market, usize>,
    rows_skipped: BTreeMap<Market, usize>,
    partitions: usize,
    duplicate_warnings: usize,
    unmatched: usize,
    filters: FilterCounts,
    cells_fitted: usize,
    cells_flagged: usize,
    rejections: Vec<CellRejection>,
}

/// Quotes to `cells.csv`: load, pair, filter and fit every (market, date, expiry) cell.
pub fn extract(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    cfg.validate(Stage::Extract.needs())?;
    let mut audit = ExtractAudit::default();
    let mut quotes = Vec::new();
    for m in cfg.spec_markets() {
        let path = cfg.inputs.quotes(m).expect("validated");
        let load = load_quotes(path, m, cfg.snapshot_time)?;
        audit.quotes_loaded.insert(m, load.quotes.len());
        audit.rows_skipped.insert(m, load.skipped);
        quotes.extend(load.quotes);
    }
    let partitions: Vec<_> = partition_by_day(quotes).into_values().collect();
    audit.partitions = partitions.len();
    let per_day = partitions
        .par_iter()
        .map(|day| {
            let paired = pair_quotes(day)?;
            let filtered = apply_filters(paired.pairs, &cfg.filters);
            Ok((paired.duplicate_warnings, paired.unmatched, filtered))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut cells: Vec<Vec<QuotePair>> = Vec::new();
    for (dups, unmatched, filtered) in per_day {
        audit.duplicate_warnings += dups;
        audit.unmatched += unmatched;
        let c = &mut audit.filters;
        c.low_mid += filtered.counts.low_mid;
        c.wide_spread += filtered.counts.wide_spread;
        c.thin_expiries += filtered.counts.thin_expiries;
        c.thin_expiry_pairs += filtered.counts.thin_expiry_pairs;
        cells.extend(filtered.groups.into_values());
    }
    let outcome = extract_panel(&cells, &FitConfig::from(cfg.fit));
    audit.cells_fitted = outcome.fits.len();
    audit.cells_flagged = outcome
        .fits
        .iter()
        .filter(|f| f.flags.high_discount || f.flags.forward_off_range || f.flags.atm_fallback)
        .count();
    audit.rejections = outcome.rejections;

    csv_out(&cfg.out_dir.join(CELLS_FILE), |w| write_cells(w, &outcome.fits))?;
    write_json(&cfg.out_dir.join("extract_audit.json"), &audit)?;
    Ok(vec![CELLS_FILE.into(), "extract_audit.json".into()])
}

#[derive(Debug, Serialize)]
struct CurveIssue {
    date: NaiveDate,
    kind: CurveKind,
    issue: String,
}

#[derive(Debug, Default, Serialize)]
struct CurveAudit {
    built: BTreeMap<CurveKind, usize>,
    failures: Vec<CurveIssue>,
    anomalies: Vec<CurveIssue>,
    warnings: BTreeMap<&'static str, SeriesWarnings>,
}

/// Rate files to `curves.csv`: one OIS and/or DGS curve per quoted date.
pub fn bootstrap(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    cfg.validate(Stage::Bootstrap.needs())?;
    let files = MacroFiles {
        ois: cfg.inputs.ois.clone(),
        dgs: cfg.inputs.dgs.clone(),
        ..MacroFiles::default()
    };
    let aligned = align_macro(&files)?;
    let mut audit = CurveAudit {
        warnings: aligned.warnings,
        ..CurveAudit::default()
    };
    let mut jobs: Vec<(NaiveDate, CurveKind, &TenorQuotes)> = Vec::new();
    jobs.extend(aligned.series.ois_par.iter().map(|(d, q)| (*d, CurveKind::Ois, q)));
    jobs.extend(aligned.series.dgs_yield.iter().map(|(d, q)| (*d, CurveKind::Dgs, q)));
    jobs.sort_by_key(|(d, k, _)| (*d, *k));
    let accrual = cfg.curves.accrual;
    let built: Vec<_> = jobs
        .par_iter()
        .map(|&(date, kind, quotes)| {
            let curve = match kind {
                CurveKind::Ois => bootstrap_ois(date, quotes, accrual),
                CurveKind::Dgs => build_dgs_curve(date, quotes),
            };
            (date, kind, curve)
        })
        .collect();
    let mut curves = Vec::new();
    for (date, kind, curve) in built {
        match curve {
            Ok(c) => {
                if let Some(issue) = c.anomaly(MAX_ZERO_JUMP) {
                    audit.anomalies.push(CurveIssue { date, kind, issue });
                }
                *audit.built.entry(kind).or_default() += 1;
                curves.push(c);
            }
            Err(e) => audit.failures.push(CurveIssue {
                date,
                kind,
                issue: e.to_string(),
            }),
        }
    }
    csv_out(&cfg.out_dir.join(CURVES_FILE), |w| write_curves(w, &curves))?;
    write_json(&cfg.out_dir.join("curve_audit.json"), &audit)?;
    Ok(vec![CURVES_FILE.into(), "curve_audit.json".into()])
}

#[derive(Debug, Serialize)]
struct DistReport {
    benchmark: Benchmark,
    /// Every measured cell, sub-month maturities included.
    all_cells: Option<DistributionStats>,
    regression_sample: Option<DistributionStats>,
    daily_pooled_median: Option<DistributionStats>,
    maturity_profile: Vec<BinSummary>,
    yearly_profile: Vec<YearSummary>,
}

#[derive(Debug, Serialize)]
struct PanelAudit {
    benchmark: Benchmark,
    cells: usize,
    observations: usize,
    rows: usize,
    drops: DropAudit,
}

fn benchmark_kind(bm: Benchmark) -> CurveKind {
    match bm {
        Benchmark::Ois => CurveKind::Ois,
        Benchmark::Dgs => CurveKind::Dgs,
    }
}

/// Cells, curves and macro series to the carry-gap panel, its summaries and
/// the regression panel.
pub fn panel(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    cfg.validate(Stage::Panel.needs())?;
    let bm = cfg.benchmark;
    let cells_path = upstream(cfg, CELLS_FILE, &CELLS_HEADER)?;
    let cells = read_cells(open(&cells_path)?).map_err(|source| CliError::Csv {
        path: cells_path.clone(),
        source,
    })?;
    let curves_path = upstream(cfg, CURVES_FILE, &CURVES_HEADER)?;
    let kind = benchmark_kind(bm);
    let curves: BTreeMap<NaiveDate, RateCurve> = read_curves(open(&curves_path)?)?
        .into_iter()
        .filter(|((_, k), _)| *k == kind)
        .map(|((d, _), c)| (d, c))
        .collect();
    let files = restrict_macro(&cfg.inputs, bm);
    let aligned = align_macro(&files)?;
    aligned.series.require(bm, &cfg.spec_markets())?;

    let cells: Vec<_> = cells
        .into_iter()
        .filter(|c| cfg.spec_markets().contains(&c.key.market))
        .collect();
    let build = carrygap_core::econometrics::build_panel(&cells, &curves, &aligned.series, bm);

    let mut daily = aggregate_daily(&build.observations);
    let pooled = aggregate_daily_pooled(&build.observations);
    let width = cfg.carrygap.hist_width_bp;
    let stats = |v: Vec<f64>| distribution_stats(&v, width).ok();
    let dist = DistReport {
        benchmark: bm,
        all_cells: stats(build.observations.iter().map(|o| o.cg_bp).collect()),
        regression_sample: stats(build.rows.iter().map(|r| r.cg_bp).collect()),
        daily_pooled_median: stats(pooled.iter().map(|d| d.median_bp).collect()),
        maturity_profile: maturity_profile(&build.observations),
        yearly_profile: yearly_profile(&[daily.as_slice(), pooled.as_slice()].concat()),
    };
    daily.extend(pooled);
    let audit = PanelAudit {
        benchmark: bm,
        cells: cells.len(),
        observations: build.observations.len(),
        rows: build.rows.len(),
        drops: build.audit,
    };

    let out = &cfg.out_dir;
    let panel_name = panel_file(bm);
    let audit_name = format!("panel_audit_{}.json", bm.as_str());
    csv_out(&out.join(CARRYGAP_FILE), |w| write_carrygap_panel(w, &build.observations))?;
    csv_out(&out.join(DAILY_FILE), |w| write_daily_medians(w, &daily))?;
    write_json(&out.join(DIST_FILE), &dist)?;
    csv_out(&out.join(&panel_name), |w| write_panel(w, &build.rows))?;
    write_json(&out.join(&audit_name), &audit)?;
    Ok(vec![
        CARRYGAP_FILE.into(),
        DAILY_FILE.into(),
        DIST_FILE.into(),
        panel_name,
        audit_name,
    ])
}

fn restrict_macro(inputs: &Inputs, bm: Benchmark) -> MacroFiles {
    let mut files = inputs.macro_files();
    match bm {
        Benchmark::Ois => files.dgs = None,
        Benchmark::Dgs => files.ois = None,
    }
    files
}

fn load_panel(cfg: &RunConfig) -> Result<Vec<PanelRow>, CliError> {
    let path = upstream(cfg, &panel_file(cfg.benchmark), &PANEL_HEADER)?;
    read_panel(open(&path)?).map_err(|source| CliError::Csv { path, source })
}

/// Date-clustered OLS for every configured spec.
pub fn regress(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    cfg.validate(Stage::Regress.needs())?;
    let rows = load_panel(cfg)?;
    let mut written = Vec::new();
    for &spec in &cfg.specs {
        let fit = fit_ols(&rows, spec, cfg.benchmark)?;
        let name = fit_file(spec, cfg.benchmark);
        write_json(&cfg.out_dir.join(&name), &fit)?;
        written.push(name);
    }
    Ok(written)
}

/// Leave-one-year-out validation for every configured spec.
pub fn loyo(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    cfg.validate(Stage::Loyo.needs())?;
    let rows = load_panel(cfg)?;
    let reports = cfg
        .specs
        .iter()
        .map(|&spec| run_loyo(&rows, spec, cfg.benchmark))
        .collect::<Result<Vec<LoyoReport>, _>>()?;
    let mut written = Vec::new();
    for r in &reports {
        let name = loyo_file(r.spec, r.benchmark);
        csv_out(&cfg.out_dir.join(&name), |w| write_loyo(w, r))?;
        written.push(name);
    }
    let refs: Vec<&LoyoReport> = reports.iter().collect();
    csv_out(&cfg.out_dir.join(SIGN_TABLE_FILE), |w| write_sign_table(w, &refs))?;
    let summary = format!("loyo_summary_{}.json", cfg.benchmark.as_str());
    write_json(&cfg.out_dir.join(&summary), &reports)?;
    written.push(SIGN_TABLE_FILE.into());
    written.push(summary);
    Ok(written)
}

pub fn mc_check_config(cfg: &RunConfig) -> SupportSimConfig {
    let mc = &cfg.mc_check;
    SupportSimConfig {
        sigma: mc.sigma,
        horizon: mc.horizon,
        n_paths: mc.paths,
        n_steps: mc.steps,
        seed: cfg.seed,
    }
}

/// Monte Carlo support check against the closed forms. Writes the report
/// either way; a failed comparison is returned as the report with `pass`
/// false.
pub fn mc_check_stage(cfg: &RunConfig) -> Result<(Vec<String>, McCheckReport), CliError> {
    cfg.validate(Stage::McCheck.needs())?;
    let report = mc_check(&mc_check_config(cfg), cfg.mc_check.tolerance)?;
    write_json(&cfg.out_dir.join(PATHRISK_FILE), &report)?;
    Ok((vec![PATHRISK_FILE.into()], report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Regression panel with the pooled in-sample plant.
    Table2,
    /// Raw quote and macro files for an end-to-end run.
    Dataset,
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub preset: Preset,
    pub years: Option<u32>,
    pub day_stride: Option<usize>,
}

/// Writes synthetic inputs into the output directory.
pub fn synth(cfg: &RunConfig, opts: &SynthOptions) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    match opts.preset {
        Preset::Table2 => {
            let mut spec = PlantedPanelSpec::table2(cfg.seed);
            if let Some(y) = opts.years {
                spec.years = y;
            }
            if let Some(s) = opts.day_stride {
                spec.day_stride = s;
            }
            let panel = gen_regression_panel(&spec)?;
            let name = panel_file(cfg.benchmark);
            csv_out(&cfg.out_dir.join(&name), |w| write_panel(w, &panel.rows))?;
            write_json(&cfg.out_dir.join("synth_truth.json"), &panel.truth)?;
            Ok(vec![name, "synth_truth.json".into()])
        }
        Preset::Dataset => {
            let mut spec = DatasetSpec {
                seed: cfg.seed,
                ..DatasetSpec::default()
            };
            if let Some(y) = opts.years {
                spec.years = y;
            }
            if let Some(s) = opts.day_stride {
                spec.day_stride = s;
            }
            let data = gen_dataset(&spec)?;
            data.write(&cfg.out_dir)?;
            let run_cfg = RunConfig {
                inputs: Inputs {
                    quotes_spx: Some("quotes_spx.csv".into()),
                    quotes_rut: Some("quotes_rut.csv".into()),
                    ois: Some("ois.csv".into()),
                    dgs: Some("dgs.csv".into()),
                    vix: Some("vix.csv".into()),
                    rvx: Some("rvx.csv".into()),
                    nfci: Some("nfci.csv".into()),
                },
                snapshot_time: spec.snapshot,
                out_dir: "run".into(),
                seed: cfg.seed,
                ..RunConfig::default()
            };
            let cfg_path = cfg.out_dir.join("config.toml");
            std::fs::write(&cfg_path, run_cfg.to_toml()).map_err(io_err(&cfg_path))?;
            Ok([
                "quotes_spx.csv",
                "quotes_rut.csv",
                "ois.csv",
                "dgs.csv",
                "vix.csv",
                "rvx.csv",
                "nfci.csv",
                "planted_cells.csv",
                "config.toml",
            ]
            .map(String::from)
            .to_vec())
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub stages: Vec<&'static str>,
    pub outputs: Vec<String>,
    pub mc_check: Option<McCheckReport>,
}

/// The pipeline stages a config asks for, in order.
pub fn planned_stages(cfg: &RunConfig) -> Vec<Stage> {
    let mut s = vec![Stage::Extract, Stage::Bootstrap, Stage::Panel, Stage::Regress];
    if cfg.loyo {
        s.push(Stage::Loyo);
    }
    if cfg.mc_check.enabled {
        s.push(Stage::McCheck);
    }
    s
}

/// Validates everything up front, runs every stage through on-disk
/// artifacts and writes `run_manifest.json`. On failure the outputs written
/// so far are kept and a `.partial` marker records the error.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let plan = planned_stages(cfg);
    let needs: Vec<Need> = plan.iter().flat_map(|s| s.needs().iter().copied()).collect();
    cfg.validate(&needs)?;
    let marker = cfg.out_dir.join(PARTIAL_MARKER);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(io_err(&marker))?;
    }
    let mut outcome = RunOutcome {
        stages: Vec::new(),
        outputs: Vec::new(),
        mc_check: None,
    };
    let result = (|| {
        for stage in &plan {
            let files = if *stage == Stage::McCheck {
                let (files, report) = mc_check_stage(cfg)?;
                let pass = report.pass;
                outcome.mc_check = Some(report);
                outcome.outputs.extend(files);
                if !pass {
                    return Err(CliError::CheckFailed(format!("see {PATHRISK_FILE}")));
                }
                Vec::new()
            } else {
                stage.run(cfg)?
            };
            outcome.stages.push(stage.name());
            outcome.outputs.extend(files);
        }
        write_manifest(cfg, outcome.stages.clone(), &outcome.outputs)
    })();
    match result {
        Ok(()) => Ok(outcome),
        Err(e) => {
            let text = format!(
                "failed after stages [{}]: {e}\n",
                outcome.stages.join(", ")
            );
            std::fs::write(&marker, text).map_err(io_err(&marker))?;
            Err(e)
        }
    }
}
