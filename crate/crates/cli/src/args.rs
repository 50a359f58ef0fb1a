use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gengap_core::zoo::ZooPlan;

use crate::commands::{run_all, run_gen_zoo, run_measure, run_score, with_workers};
use crate::measures::{MeasureName, MeasureSettings};
use crate::report::{all_csv, measure_csv, score_csv, write_json, zoo_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gengap", version, about = "Generalization-gap complexity measures and their evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Log progress at info level (warnings are always shown).
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a synthetic model zoo and write it with its manifest.
    GenZoo {
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// JSON zoo plan overriding the default sweep.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate measures on one model and dataset.
    Measure {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        knobs: MeasureArgs,
        /// JSON report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Score measures stored in a zoo manifest.
    Score {
        #[arg(long)]
        zoo: PathBuf,
        /// Defaults to every measure present in the manifest.
        #[arg(long, value_delimiter = ',', value_parser = parse_measure)]
        measures: Option<Vec<MeasureName>>,
        #[arg(long, default_value_t = 2)]
        max_cond_size: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// gen-zoo, then measure every model, then score.
    All {
        #[arg(long)]
        seed: u64,
        /// Output directory for the zoo and `report.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[command(flatten)]
        knobs: MeasureArgs,
        #[arg(long, default_value_t = 2)]
        max_cond_size: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// Comma-separated measure names; all eight by default.
    #[arg(long, value_delimiter = ',', value_parser = parse_measure)]
    pub measures: Option<Vec<MeasureName>>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub noise_samples: Option<usize>,
    #[arg(long)]
    pub margin_steps: Option<usize>,
    #[arg(long)]
    pub margin_restarts: Option<usize>,
    #[arg(long)]
    pub pm_iters: Option<usize>,
    #[arg(long)]
    pub pm_tol: Option<f64>,
}

fn parse_measure(s: &str) -> Result<MeasureName, String> {
    s.trim().parse()
}

impl MeasureArgs {
    pub fn measures(&self) -> Vec<MeasureName> {
        self.measures.clone().unwrap_or_else(|| MeasureName::ALL.to_vec())
    }

    /// Applies the overrides and validates the result.
    pub fn settings(&self, seed: u64) -> gengap_core::Result<MeasureSettings> {
        let mut s = MeasureSettings::with_seed(seed);
        if let Some(v) = self.nu {
            s.noise.nu = v;
        }
        if let Some(v) = self.noise_samples {
            s.noise.num_noise_samples = v;
        }
        if let Some(v) = self.margin_steps {
            s.margin_solver.max_steps = v;
        }
        if let Some(v) = self.margin_restarts {
            s.margin_solver.num_restarts = v;
        }
        if let Some(v) = self.pm_iters {
            s.power_method.max_iters = v;
        }
        if let Some(v) = self.pm_tol {
            s.power_method.rel_tolerance = v;
        }
        s.noise.validate()?;
        s.margin_solver.validate()?;
        s.power_method.validate()?;
        Ok(s)
    }
}

fn load_plan(path: Option<&Path>, seed: u64) -> anyhow::Result<ZooPlan> {
    match path {
        None => Ok(ZooPlan::default_with_seed(seed)),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading plan {}", p.display()))?;
            let mut plan: ZooPlan = serde_json::from_str(&text).context("invalid zoo plan")?;
            plan.seed = seed;
            Ok(plan)
        }
    }
}

fn status(partial: bool) -> i32 {
    if partial {
        EXIT_PARTIAL
    } else {
        EXIT_OK
    }
}

/// Executes a parsed command; returns the process exit code.
pub fn execute(cli: Cli) -> anyhow::Result<i32> {
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    // Ignored when a logger is already installed (repeated in-process runs).
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    // Configuration errors are usage errors: report them before any compute.
    let settings = match &cli.command {
        Command::Measure { knobs, seed, .. } | Command::All { knobs, seed, .. } => match knobs.settings(*seed) {
            Ok(s) => Some(s),
            Err(e) => {
                eprintln!("error: {e}");
                return Ok(EXIT_USAGE);
            }
        },
        _ => None,
    };
    let workers = cli.workers.unwrap_or(0);
    with_workers(workers, move || match cli.command {
        Command::GenZoo { seed, out, plan, csv } => {
            let plan = load_plan(plan.as_deref(), seed)?;
            let (report, _) = run_gen_zoo(&plan, &out)?;
            write_json(&report, Some(&out.join("zoo.json")))?;
            if let Some(c) = csv {
                zoo_csv(&report, &c)?;
            }
            Ok(EXIT_OK)
        }
        Command::Measure { model, data, knobs, out, csv, .. } => {
            let report = run_measure(&model, &data, &knobs.measures(), &settings.unwrap())?;
            write_json(&report, out.as_deref())?;
            if let Some(c) = csv {
                measure_csv(&report, &c)?;
            }
            for m in report.measures.iter().filter(|m| m.error.is_some()) {
                eprintln!("{} failed: {}", m.measure, m.error.as_deref().unwrap_or_default());
            }
            Ok(status(report.has_failures()))
        }
        Command::Score { zoo, measures, max_cond_size, out, csv } => {
            let report = run_score(&zoo, measures.as_deref(), max_cond_size)?;
            write_json(&report, out.as_deref())?;
            if let Some(c) = csv {
                score_csv(&report, &c)?;
            }
            for s in report.sections.iter().filter(|s| s.error.is_some()) {
                eprintln!("{} could not be scored: {}", s.measure, s.error.as_deref().unwrap_or_default());
            }
            Ok(status(report.has_failures()))
        }
        Command::All { seed, out, plan, knobs, max_cond_size, csv } => {
            let plan = load_plan(plan.as_deref(), seed)?;
            let measures = knobs.measures();
            let report = run_all(&plan, &measures, &settings.unwrap(), max_cond_size, &out)?;
            write_json(&report, Some(&out.join("report.json")))?;
            if let Some(c) = csv {
                all_csv(&report, &measures, &c)?;
            }
            Ok(status(report.has_failures()))
        }
    })?
}

/// Parses `args` (program name first) and runs; never panics on bad input.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}
