//! Command-line front end: configuration and experiment commands.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{parse_config, BasisSize, RunConfig, Source};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "canalsense",
    version,
    about = "Sensitivity analysis of a boundary-controlled shallow-water channel"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full-order run: trajectory, step norms and gate positions.
    Simulate(CommonArgs),
    /// Snapshots, POD and the persisted basis.
    BuildRb(CommonArgs),
    /// Variance of the reduced-model error against m and the basis-size rule.
    Calibrate(CommonArgs),
    /// First-order and total Sobol indices with confidence intervals.
    Sobol(CommonArgs),
    /// Invariant checks; exits with status 4 if one fails.
    Validate(CommonArgs),
    /// Sampled parameters and outputs for external analysis.
    ExportSamples(CommonArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Configuration file with `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte-Carlo sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Reduced basis size, or `auto`.
    #[arg(long)]
    pub m: Option<String>,
    /// Evaluate the full model instead of the reduced one.
    #[arg(long)]
    pub full: bool,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory (default: $CANALSENSE_OUT or ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Confidence level of the intervals.
    #[arg(long)]
    pub level: Option<f64>,
    /// Any configuration key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl CommonArgs {
    /// Configuration from defaults, file, `--set` and the dedicated flags, in
    /// that order of precedence.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut overrides = self.set.clone();
        if let Some(v) = self.seed {
            overrides.push(format!("seed={v}"));
        }
        if let Some(v) = self.n {
            overrides.push(format!("n={v}"));
        }
        if let Some(v) = &self.m {
            overrides.push(format!("m={v}"));
        }
        if let Some(v) = self.threads {
            overrides.push(format!("threads={v}"));
        }
        if let Some(v) = &self.out {
            overrides.push(format!("out={}", v.display()));
        }
        if let Some(v) = self.level {
            overrides.push(format!("level={v}"));
        }
        parse_config(self.config.as_deref(), &overrides)
    }
}

fn init_threads(threads: usize) -> Result<()> {
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::config("threads", e.to_string()))?;
    }
    Ok(())
}

/// Runs one parsed command and returns its report.
pub fn run(cli: &Cli) -> Result<String> {
    let (args, run): (&CommonArgs, fn(&RunConfig, bool) -> Result<String>) = match &cli.command {
        Command::Simulate(a) => (a, |c, _| commands::simulate(c)),
        Command::BuildRb(a) => (a, |c, _| commands::build_rb(c)),
        Command::Calibrate(a) => (a, |c, _| commands::calibrate(c)),
        Command::Sobol(a) => (a, commands::sobol),
        Command::Validate(a) => (a, |c, _| commands::validate(c)),
        Command::ExportSamples(a) => (a, commands::export_samples),
    };
    let cfg = args.resolve()?;
    init_threads(cfg.threads)?;
    run(&cfg, args.full)
}
