use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use carrygap_cli::config::RunConfig;
use carrygap_cli::stages::{self, Preset, Stage, SynthOptions};
use carrygap_cli::{run_pipeline, with_workers, CliError};
use carrygap_core::econometrics::Spec;
use carrygap_core::Benchmark;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "carrygap", version, about = "Option-implied carry gaps: extraction, curves, panels, regressions")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    benchmark: Option<BenchmarkArg>,
    #[arg(long, global = true, value_enum)]
    spec: Option<SpecArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchmarkArg {
    Ois,
    Dgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpecArg {
    Pooled,
    Spx,
    Rut,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Table2,
    Dataset,
}

#[derive(Subcommand)]
enum Command {
    /// Fit implied discount factors from quotes into cells.csv.
    Extract,
    /// Build benchmark curves into curves.csv.
    Bootstrap,
    /// Join cells, curves and macro series into carry-gap and regression panels.
    Panel,
    /// Fit the configured regression specs.
    Regress,
    /// Leave-one-year-out validation.
    Loyo,
    /// Compare simulated margin support with its closed forms.
    McCheck {
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Relative tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Generate synthetic inputs with planted ground truth.
    Synth {
        #[arg(long, value_enum, default_value = "table2")]
        preset: PresetArg,
        #[arg(long)]
        years: Option<u32>,
        /// Keep every n-th business day.
        #[arg(long)]
        day_stride: Option<usize>,
    },
    /// Full pipeline with a run manifest.
    Run,
}

fn build_config(g: &Global) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(b) = g.benchmark {
        cfg.benchmark = match b {
            BenchmarkArg::Ois => Benchmark::Ois,
            BenchmarkArg::Dgs => Benchmark::Dgs,
        };
    }
    if let Some(s) = g.spec {
        cfg.specs = match s {
            SpecArg::Pooled => vec![Spec::Pooled],
            SpecArg::Spx => vec![Spec::SpxOnly],
            SpecArg::Rut => vec![Spec::RutOnly],
            SpecArg::All => Spec::ALL.to_vec(),
        };
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(w) = g.workers {
        cfg.workers = Some(w);
    }
    if let Some(o) = &g.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

/// Prints a line, ignoring a closed stdout so piping into `head` is harmless.
fn say(line: std::fmt::Arguments<'_>) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = build_config(&cli.global)?;
    if cfg.workers == Some(0) {
        return Err(CliError::Config("workers must be at least 1".into()));
    }
    let workers = cfg.workers;
    let report = |files: Vec<String>| {
        for f in files {
            say(format_args!("wrote {}", cfg.out_dir.join(f).display()));
        }
    };
    match cli.command {
        Command::Extract => report(with_workers(workers, || Stage::Extract.run(&cfg))??),
        Command::Bootstrap => report(with_workers(workers, || Stage::Bootstrap.run(&cfg))??),
        Command::Panel => report(with_workers(workers, || Stage::Panel.run(&cfg))??),
        Command::Regress => report(with_workers(workers, || Stage::Regress.run(&cfg))??),
        Command::Loyo => report(with_workers(workers, || Stage::Loyo.run(&cfg))??),
        Command::McCheck {
            sigma,
            horizon,
            paths,
            steps,
            tolerance,
        } => {
            let mc = &mut cfg.mc_check;
            mc.sigma = sigma.unwrap_or(mc.sigma);
            mc.horizon = horizon.unwrap_or(mc.horizon);
            mc.paths = paths.unwrap_or(mc.paths);
            mc.steps = steps.unwrap_or(mc.steps);
            mc.tolerance = tolerance.unwrap_or(mc.tolerance);
            let (files, r) = with_workers(workers, || stages::mc_check_stage(&cfg))??;
            for (label, line) in [
                ("support at horizon", &r.support_at_horizon),
                ("time-averaged support", &r.time_avg_support),
            ] {
                say(format_args!(
                    "{label}: closed form {:.6}, estimate {:.6} (se {:.6}), rel error {:.4}% -> {}",
                    line.closed_form,
                    line.estimate,
                    line.std_error,
                    100.0 * line.rel_error,
                    if line.pass { "PASS" } else { "FAIL" }
                ));
            }
            report(files);
            if !r.pass {
                return Err(CliError::CheckFailed(format!(
                    "tolerance {} exceeded",
                    r.tolerance
                )));
            }
        }
        Command::Synth {
            preset,
            years,
            day_stride,
        } => {
            let opts = SynthOptions {
                preset: match preset {
                    PresetArg::Table2 => Preset::Table2,
                    PresetArg::Dataset => Preset::Dataset,
                },
                years,
                day_stride,
            };
            report(stages::synth(&cfg, &opts)?);
        }
        Command::Run => {
            let outcome = with_workers(workers, || run_pipeline(&cfg))??;
            say(format_args!("stages: {}", outcome.stages.join(" -> ")));
            report(outcome.outputs);
            report(vec![carrygap_cli::MANIFEST_FILE.to_string()]);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
