//! `fedmf`: batch experiment runner for federated low-rank factorization.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for failures
//! while running.

mod bounds;
mod config;
mod dataset;
mod error;
mod generate;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedmf::solver::Momentum;

use crate::config::{parse_momentum, ExperimentConfig, Overrides};
use crate::error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "fedmf", version, about = "Federated low-rank matrix factorization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset as per-client CSV shards plus a manifest
    Generate(CommonArgs),
    /// Run every (alpha, rank, momentum, trial) cell of the grid
    Run(CommonArgs),
    /// Evaluate the closed-form bounds on the dataset's spectrum
    Bounds(CommonArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// JSON experiment config; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,

    /// Power-iteration rounds, comma separated
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<usize>>,

    /// Latent dimensions, comma separated
    #[arg(long, value_delimiter = ',')]
    rank: Option<Vec<usize>>,

    /// none or nesterov, comma separated
    #[arg(long, value_delimiter = ',', value_parser = parse_momentum)]
    momentum: Option<Vec<Momentum>>,

    /// Independent trials per cell
    #[arg(long)]
    trials: Option<usize>,

    /// Master seed
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let overrides = Overrides {
            alpha: self.alpha.clone(),
            rank: self.rank.clone(),
            momentum: self.momentum.clone(),
            trials: self.trials,
            seed: self.seed,
            out: self.out.clone(),
        };
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

fn execute(command: &Command) -> CliResult<String> {
    match command {
        Command::Generate(args) => {
            let cfg = args.load()?;
            let manifest = generate::cmd_generate(&cfg)?;
            Ok(format!(
                "wrote {} shards of {}x{} to {}",
                manifest.num_clients,
                manifest.rows_per_client[0],
                manifest.dim,
                cfg.out.display()
            ))
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            let cells = run::cmd_run(&cfg)?;
            let mut lines = Vec::with_capacity(cells.len() + 1);
            for s in &cells {
                lines.push(format!(
                    "{}: kappa {} final error {:.6e} (eps_min {:.6e})",
                    s.cell,
                    s.kappa.map_or("inf".to_string(), |k| format!("{k:.4}")),
                    s.final_error,
                    s.eps_min
                ));
            }
            lines.push(format!("wrote {} cells to {}", cells.len(), cfg.out.display()));
            Ok(lines.join("\n"))
        }
        Command::Bounds(args) => {
            let cfg = args.load()?;
            let report = bounds::cmd_bounds(&cfg)?;
            Ok(format!(
                "wrote {} bound entries to {}",
                report.entries.len(),
                cfg.out.join(bounds::BOUNDS_FILE).display()
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fedmf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
