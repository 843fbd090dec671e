use std::path::{Path, PathBuf};

use carrygap_core::curves::Accrual;
use carrygap_core::econometrics::Spec;
use carrygap_core::implied_discount::{FitConfig, Weighting};
use carrygap_core::ingest::{FilterConfig, MacroFiles, SnapshotTime};
use carrygap_core::{Benchmark, Market};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub quotes_spx: Option<PathBuf>,
    pub quotes_rut: Option<PathBuf>,
    pub ois: Option<PathBuf>,
    pub dgs: Option<PathBuf>,
    pub vix: Option<PathBuf>,
    pub rvx: Option<PathBuf>,
    pub nfci: Option<PathBuf>,
}

impl Inputs {
    pub fn quotes(&self, market: Market) -> Option<&Path> {
        match market {
            Market::Spx => self.quotes_spx.as_deref(),
            Market::Rut => self.quotes_rut.as_deref(),
        }
    }

    /// Markets with a configured quote file.
    pub fn markets(&self) -> Vec<Market> {
        Market::ALL.into_iter().filter(|m| self.quotes(*m).is_some()).collect()
    }

    pub fn macro_files(&self) -> MacroFiles {
        MacroFiles {
            ois: self.ois.clone(),
            dgs: self.dgs.clone(),
            vix: self.vix.clone(),
            rvx: self.rvx.clone(),
            nfci: self.nfci.clone(),
        }
    }

    pub fn rates(&self, benchmark: Benchmark) -> Option<&Path> {
        match benchmark {
            Benchmark::Ois => self.ois.as_deref(),
            Benchmark::Dgs => self.dgs.as_deref(),
        }
    }

    fn vol(&self, market: Market) -> Option<&Path> {
        match market {
            Market::Spx => self.vix.as_deref(),
            Market::Rut => self.rvx.as_deref(),
        }
    }

    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.quotes_spx,
            &mut self.quotes_rut,
            &mut self.ois,
            &mut self.dgs,
            &mut self.vix,
            &mut self.rvx,
            &mut self.nfci,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub min_strikes: usize,
    pub atm_band: f64,
    pub weighting: Weighting,
}

impl Default for FitSettings {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            min_strikes: f.min_strikes,
            atm_band: f.atm_band,
            weighting: f.weighting,
        }
    }
}

impl From<FitSettings> for FitConfig {
    fn from(s: FitSettings) -> Self {
        FitConfig {
            min_strikes: s.min_strikes,
            atm_band: s.atm_band,
            weighting: s.weighting,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveSettings {
    pub accrual: Accrual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarryGapSettings {
    /// Histogram bucket width for `dist_stats.json`, bp.
    pub hist_width_bp: f64,
}

impl Default for CarryGapSettings {
    fn default() -> Self {
        Self {
            hist_width_bp: carrygap_core::carrygap::DEFAULT_HIST_WIDTH_BP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McCheckSettings {
    pub enabled: bool,
    pub sigma: f64,
    pub horizon: f64,
    pub paths: usize,
    pub steps: usize,
    pub tolerance: f64,
}

impl Default for McCheckSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            sigma: 0.2,
            horizon: 1.0,
            paths: 200_000,
            steps: 2_000,
            tolerance: 0.02,
        }
    }
}

/// Everything a pipeline run depends on. Loaded from TOML; every field has a
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub snapshot_time: SnapshotTime,
    pub filters: FilterConfig,
    pub fit: FitSettings,
    pub curves: CurveSettings,
    pub benchmark: Benchmark,
    pub specs: Vec<Spec>,
    pub carrygap: CarryGapSettings,
    pub loyo: bool,
    pub mc_check: McCheckSettings,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Thread count; `None` uses every core. Never affects results.
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Inputs::default(),
            snapshot_time: SnapshotTime::default(),
            filters: FilterConfig::default(),
            fit: FitSettings::default(),
            curves: CurveSettings::default(),
            benchmark: Benchmark::Ois,
            specs: Spec::ALL.to_vec(),
            carrygap: CarryGapSettings::default(),
            loyo: true,
            mc_check: McCheckSettings::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            workers: None,
        }
    }
}

/// Subset of the config echoed into the manifest: everything that can
/// change an output byte.
#[derive(Debug, Serialize)]
pub struct ConfigEcho<'a> {
    pub inputs: &'a Inputs,
    pub snapshot_time: SnapshotTime,
    pub filters: &'a FilterConfig,
    pub fit: &'a FitSettings,
    pub curves: &'a CurveSettings,
    pub benchmark: Benchmark,
    pub specs: &'a [Spec],
    pub carrygap: &'a CarryGapSettings,
    pub loyo: bool,
    pub mc_check: &'a McCheckSettings,
    pub seed: u64,
}

/// What a stage needs from the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Need {
    Quotes,
    Rates,
    Regressors,
}

impl RunConfig {
    /// Reads a TOML config; relative input paths and `out_dir` are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.inputs.resolve(base);
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn echo(&self) -> ConfigEcho<'_> {
        ConfigEcho {
            inputs: &self.inputs,
            snapshot_time: self.snapshot_time,
            filters: &self.filters,
            fit: &self.fit,
            curves: &self.curves,
            benchmark: self.benchmark,
            specs: &self.specs,
            carrygap: &self.carrygap,
            loyo: self.loyo,
            mc_check: &self.mc_check,
            seed: self.seed,
        }
    }

    /// Markets covered by the configured specs.
    pub fn spec_markets(&self) -> Vec<Market> {
        Market::ALL
            .into_iter()
            .filter(|m| self.specs.iter().any(|s| s.includes(*m)))
            .collect()
    }

    /// Fails before any compute when settings are inconsistent or a
    /// required input is absent.
    pub fn validate(&self, needs: &[Need]) -> Result<(), CliError> {
        let invalid = |msg: String| Err(CliError::Config(msg));
        if self.specs.is_empty() {
            return invalid("at least one regression spec is required".into());
        }
        if !(self.filters.min_mid >= 0.0 && self.filters.max_rel_spread > 0.0) {
            return invalid("filters need min_mid >= 0 and max_rel_spread > 0".into());
        }
        if self.fit.min_strikes < 2 || !(self.fit.atm_band > 0.0) {
            return invalid("fit needs min_strikes >= 2 and a positive atm_band".into());
        }
        if !(self.carrygap.hist_width_bp > 0.0) {
            return invalid("carrygap.hist_width_bp must be positive".into());
        }
        if self.workers == Some(0) {
            return invalid("workers must be at least 1".into());
        }
        let mc = &self.mc_check;
        if mc.enabled
            && !(mc.sigma >= 0.0 && mc.horizon > 0.0 && mc.paths > 0 && mc.steps > 0 && mc.tolerance > 0.0)
        {
            return invalid("mc_check settings must be positive".into());
        }
        let markets = self.spec_markets();
        let require = |label: &str, p: Option<&Path>| -> Result<(), CliError> {
            match p {
                None => Err(CliError::Config(format!("input `{label}` is required but not configured"))),
                Some(p) if !p.is_file() => {
                    Err(CliError::Config(format!("input `{label}` not found at {}", p.display())))
                }
                Some(_) => Ok(()),
            }
        };
        for need in needs {
            match need {
                Need::Quotes => {
                    for m in &markets {
                        require(&format!("quotes_{}", m.as_str().to_ascii_lowercase()), self.inputs.quotes(*m))?;
                    }
                }
                Need::Rates => require(self.benchmark.as_str(), self.inputs.rates(self.benchmark))?,
                Need::Regressors => {
                    require(self.benchmark.as_str(), self.inputs.rates(self.benchmark))?;
                    for m in &markets {
                        let label = match m {
                            Market::Spx => "vix",
                            Market::Rut => "rvx",
                        };
                        require(label, self.inputs.vol(*m))?;
                    }
                    require("nfci", self.inputs.nfci.as_deref())?;
                }
            }
        }
        ensure_writable(&self.out_dir)
    }
}

fn ensure_writable(dir: &Path) -> Result<(), CliError> {
    let io = |e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let probe = dir.join(".write_probe");
    std::fs::write(&probe, b"").map_err(io)?;
    std::fs::remove_file(&probe).map_err(io)?;
    Ok(())
}
