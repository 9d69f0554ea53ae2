//! Experiment runner for `harmonic-core`.
//!
//! Reads one TOML experiment, dispatches to the engine, and writes
//! `report.json` plus CSV and SVG artifacts into the output directory.
//!
//! Exit codes: 0 all checks pass, 1 some check failed, 2 configuration
//! error, 3 engine error (a partial report is still written).

pub mod config;
pub mod experiments;
pub mod model;
pub mod plot;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::experiments::{default_tolerances, Failure, Outcome, Tolerances};
use crate::report::{RunReport, Timing, SCHEMA_VERSION};

/// Environment variable overriding the configured seed (`--seed` wins).
pub const SEED_ENV: &str = "HARMONIC_SEED";
pub const DEFAULT_OUT: &str = "harmonic-out";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ENGINE: i32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Parser)]
#[command(name = "harmonic", version, about = "Curvature, Bochner, lemma, flow and prescription experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Curvature oracles and finite-difference convergence.
    Curvature(RunArgs),
    /// Bochner identity residual on a grid.
    Bochner(RunArgs),
    /// Sign-lemma sampling campaign.
    Lemma(RunArgs),
    /// Harmonic map heat flow with rigidity diagnostics.
    Flow(RunArgs),
    /// Harmonic-Einstein and prescribed Ricci residuals.
    Prescribe(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Multiplies every scalable tolerance.
    #[arg(long, value_name = "F")]
    pub tol_scale: Option<f64>,
}

impl Command {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Command::Curvature(_) => ExperimentKind::Curvature,
            Command::Bochner(_) => ExperimentKind::Bochner,
            Command::Lemma(_) => ExperimentKind::LemmaCampaign,
            Command::Flow(_) => ExperimentKind::Flow,
            Command::Prescribe(_) => ExperimentKind::Prescription,
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Curvature(a) | Command::Bochner(a) | Command::Lemma(a) | Command::Flow(a) | Command::Prescribe(a) => a,
        }
    }
}

/// `--seed`, then the environment variable, then the config, then 0.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: Option<u64>) -> Result<u64, ConfigError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(v) = env {
        return v
            .trim()
            .parse()
            .map_err(|_| ConfigError(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")));
    }
    Ok(config.unwrap_or(0))
}

/// A finished (or aborted) run: the report and the files that go with it.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub files: Vec<(String, String)>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        if self.report.error.is_some() {
            EXIT_ENGINE
        } else if self.report.pass {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            std::fs::write(dir.join(name), contents)?;
        }
        self.report.write(dir)
    }
}

/// Runs a validated config. Configuration problems found while building
/// models come back as `Err`; engine failures produce a partial report.
pub fn run_experiment(config: &ExperimentConfig, seed: u64, tol_scale: f64) -> Result<RunOutput, ConfigError> {
    if !(tol_scale > 0.0) || !tol_scale.is_finite() {
        return Err(ConfigError(format!("--tol-scale must be positive, got {tol_scale}")));
    }
    let (scaled, fixed) = default_tolerances(config);
    let tol = Tolerances::new(&scaled, &fixed, &config.tolerances, tol_scale)?;
    let start = Instant::now();
    let mut out = Outcome::default();
    let result = match config.experiment {
        ExperimentKind::Curvature => experiments::curvature(config.curvature.as_ref().unwrap(), seed, &tol, &mut out),
        ExperimentKind::Bochner => experiments::bochner(config.bochner.as_ref().unwrap(), &tol, &mut out),
        ExperimentKind::LemmaCampaign => experiments::lemma(config.lemma.as_ref().unwrap(), seed, &tol, &mut out),
        ExperimentKind::Flow => experiments::flow(config.flow.as_ref().unwrap(), seed, &tol, &mut out),
        ExperimentKind::Prescription => experiments::prescription(config.prescription.as_ref().unwrap(), seed, &tol, &mut out),
    };
    let error = match result {
        Ok(()) => None,
        Err(Failure::Config(msg)) => return Err(ConfigError(msg)),
        Err(Failure::Engine(msg)) => Some(msg),
    };
    let pass = error.is_none() && !out.checks.is_empty() && out.checks.iter().all(|c| c.pass);
    let mut artifacts: Vec<String> = out.files.iter().map(|(n, _)| n.clone()).collect();
    artifacts.push(report::REPORT_FILE.to_string());
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        experiment: config.experiment.name(),
        seed,
        tol_scale,
        config: config.clone(),
        tolerances: tol.into_map(),
        checks: out.checks,
        pass,
        tables: out.tables,
        artifacts,
        error,
        timing: Timing {
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        },
    };
    Ok(RunOutput { report, files: out.files })
}

/// The whole command: load, run, write, print one line per check.
pub fn run(command: &Command, env_seed: Option<&str>) -> i32 {
    let args = command.args();
    let config = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if config.experiment != command.kind() {
        eprintln!(
            "error: {} holds a `{}` experiment, not `{}`",
            args.config.display(),
            config.experiment.name(),
            command.kind().name()
        );
        return EXIT_CONFIG;
    }
    let seed = match resolve_seed(args.seed, env_seed, config.seed) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let output = match run_experiment(&config, seed, args.tol_scale.unwrap_or(1.0)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = output.write(&out_dir) {
        eprintln!("error: cannot write artifacts to {}: {e}", out_dir.display());
        return EXIT_ENGINE;
    }
    for c in &output.report.checks {
        println!("{} {} = {} (bound {})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
    }
    if let Some(e) = &output.report.error {
        eprintln!("engine error: {e}");
    }
    println!("report: {}", out_dir.join(report::REPORT_FILE).display());
    output.exit_code()
}
