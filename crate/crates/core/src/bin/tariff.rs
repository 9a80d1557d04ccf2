use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nonlinear_tariff::io::{run_pipeline, RunConfig, Stage};
use nonlinear_tariff::Error;

#[derive(Parser)]
#[command(name = "tariff", version, about = "Demand estimation and nonlinear pricing for per-unit licensed products")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic deal file and its ground truth.
    Simulate(Common),
    /// Validate a deal file, drop deals in schedule dips, summarize.
    Ingest(Common),
    /// Estimate the value model by maximum likelihood.
    Fit(Common),
    /// Derive per-customer and per-unit costs from the deals.
    Calibrate(Common),
    /// Find profit-maximizing schedules for the configured families.
    Optimize(Common),
    /// Run the counterfactual suite and the ordering-chain check.
    Counterfactual(Common),
    /// Bootstrap standard errors and intervals of the fit.
    Bootstrap(Common),
    /// Ingest, fit, calibrate, optimize and run counterfactuals.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Reuse a fit written by `tariff fit`.
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, Error> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.overrides {
            c.apply_override(kv)?;
        }
        if let Some(p) = &self.input {
            c.input = Some(p.clone());
        }
        if let Some(p) = &self.output_dir {
            c.output_dir = p.clone();
        }
        if let Some(p) = &self.fit {
            c.fit = Some(p.clone());
        }
        if let Some(s) = self.seed {
            c.seed = Some(s);
        }
        Ok(c)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, stages): (&Common, &[Stage]) = match &cli.command {
        Command::Simulate(c) => (c, &[Stage::Simulate]),
        Command::Ingest(c) => (c, &[Stage::Ingest]),
        Command::Fit(c) => (c, &[Stage::Fit]),
        Command::Calibrate(c) => (c, &[Stage::Calibrate]),
        Command::Optimize(c) => (c, &[Stage::Optimize]),
        Command::Counterfactual(c) => (c, &[Stage::Counterfactual]),
        Command::Bootstrap(c) => (c, &[Stage::Bootstrap]),
        Command::Report(c) => (c, &Stage::REPORT),
    };
    let result = common.config().and_then(|cfg| run_pipeline(&cfg, stages));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(ref io) if io.kind() == std::io::ErrorKind::NotFound => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
