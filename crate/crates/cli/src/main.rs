//! `exitmass`: compute and verify exit-mass branching mechanisms from the
//! command line.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use error::{CliError, CliResult};
use output::Output;

#[derive(Debug, Parser)]
#[command(name = "exitmass", version, about = "Exit-mass branching mechanisms of super-Brownian motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (TOML)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Random seed for Monte-Carlo commands
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Run only verification criteria whose name contains NAME
    #[arg(long, global = true, value_name = "NAME")]
    filter: Option<String>,

    /// Multiply every verification tolerance by X
    #[arg(long, global = true, value_name = "X")]
    tolerance_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Root, limiting mechanism and integral tests for a mechanism
    Mech,
    /// Solve u(r, s, theta) for each (s, theta) in the schedule
    Solve,
    /// Psi(r, theta) over the radius and theta schedules, with convergence reports
    Flow,
    /// Monte-Carlo: CSBP paths, extinction law or branching Brownian motion
    Simulate,
    /// Run the verification battery
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Mech => "mech",
            Self::Solve => "solve",
            Self::Flow => "flow",
            Self::Simulate => "simulate",
            Self::Verify => "verify",
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let overrides = Overrides {
        out: cli.out.clone(),
        seed: cli.seed,
        threads: cli.threads,
        filter: cli.filter.clone(),
        tolerance_scale: cli.tolerance_scale,
    };
    if let Some(path) = &cli.config {
        if !path.exists() {
            return Err(CliError::config(format!("config file {} does not exist", path.display())));
        }
    }
    let cfg = RunConfig::load(cli.command.name(), cli.config.as_deref(), &overrides)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot start {n} threads: {e}")))?;
    }
    let mut out = Output::create(&cfg.out)?;
    let result = match cli.command {
        Command::Mech => commands::mech(&cfg, &mut out),
        Command::Solve => commands::solve(&cfg, &mut out),
        Command::Flow => commands::flow(&cfg, &mut out),
        Command::Simulate => commands::simulate(&cfg, &mut out),
        Command::Verify => commands::verify(&cfg, &mut out),
    };
    for path in out.written() {
        eprintln!("wrote {}", path.display());
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
