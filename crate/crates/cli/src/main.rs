//! `minrule`: certify, simulate and sweep distributed hypothesis-testing scenarios.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "minrule",
    version,
    about = "Distributed hypothesis testing with min-rule belief updates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct ScenarioArgs {
    /// Scenario file, or the name of a bundled scenario (see `minrule configs`).
    pub config: String,
    /// Replace the configured rule: min_rule, lfrhe, linear or loglinear.
    #[arg(long)]
    pub rule: Option<String>,
    /// Fault bound for `--rule lfrhe`.
    #[arg(long, default_value_t = 1)]
    pub f: usize,
}

#[derive(Args, Clone)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "MINRULE_OUT", default_value = "minrule-out")]
    pub out: PathBuf,
}

#[derive(Args, Clone, Copy)]
pub struct BandArgs {
    /// Slack in nats when comparing estimated rates with their bounds.
    #[arg(long, default_value_t = minrule_core::metrics::DEFAULT_BAND)]
    pub band: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Check the sufficient conditions for learning. Exit 0 pass, 2 fail, 1 error.
    Check {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate one seed; writes trajectory.csv, summary.json and manifest.json.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        band: BandArgs,
        /// Keep every k-th step (plus the first and last).
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Simulate a range of seeds; writes per-seed summaries and the exceedance curve.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        out: OutArgs,
        #[command(flatten)]
        band: BandArgs,
        /// Inclusive range `a..b`.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        horizon: Option<usize>,
        /// Comma-separated probe times; defaults to ten evenly spaced steps.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
        /// Probe slack in nats; defaults to half of each hypothesis' best KL.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Print the rate bounds implied by the model and graph.
    Rates {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// List bundled scenarios, or print one.
    Configs {
        name: Option<String>,
        /// Print the fully expanded form.
        #[arg(long)]
        canonical: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { scenario, out } => commands::check(&scenario, &out.out),
        Command::Run {
            scenario,
            out,
            band,
            stride,
            seed,
            horizon,
        } => commands::run(&scenario, &out.out, band.band, stride, seed, horizon).map(|()| ExitCode::SUCCESS),
        Command::Sweep {
            scenario,
            out,
            band,
            seeds,
            horizon,
            grid,
            epsilon,
        } => {
            commands::sweep(&scenario, &out.out, band.band, &seeds, horizon, grid, epsilon).map(|()| ExitCode::SUCCESS)
        }
        Command::Rates { scenario, json } => commands::rates(&scenario, json).map(|()| ExitCode::SUCCESS),
        Command::Configs { name, canonical } => {
            commands::configs(name.as_deref(), canonical).map(|()| ExitCode::SUCCESS)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
