use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use dykstra_net::bench::{run_experiment, Algorithm, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dykstra-net", version, about = "Distributed Dykstra splitting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured algorithm and write a CSV trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Trace file (overrides run.out).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// tree, full or star.
        #[arg(long)]
        schedule: Option<String>,
        /// dykstra, dual-ascent or apg.
        #[arg(long)]
        algorithm: Option<String>,
        /// Subsets for dual ascent, e.g. "0,1;1,2".
        #[arg(long)]
        subsets: Option<String>,
        #[arg(long)]
        greedy: bool,
        #[arg(long)]
        parallel: bool,
    },
    /// Print the centralized reference solution.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    match try_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_main() -> anyhow::Result<bool> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            schedule,
            algorithm,
            subsets,
            greedy,
            parallel,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(out) = out {
                // relative to the working directory, not the config
                cfg.run.out = Some(std::env::current_dir()?.join(out));
            }
            if let Some(seed) = seed {
                cfg.run.seed = seed;
            }
            if let Some(s) = schedule {
                cfg.run.schedule = s;
            }
            if let Some(a) = algorithm {
                cfg.run.algorithm = a.parse::<Algorithm>()?;
            }
            if subsets.is_some() {
                cfg.run.subsets = subsets;
            }
            cfg.run.greedy |= greedy;
            cfg.run.parallel |= parallel;
            let outcome = run_experiment(&cfg).with_context(|| format!("running {}", config.display()))?;
            if outcome.success {
                println!("{}", outcome.message);
            } else {
                eprintln!("{}", outcome.message);
            }
            Ok(outcome.success)
        }
        Command::Oracle { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let x = cfg.oracle()?;
            println!("{}", x.iter().map(|v| format!("{v:.15e}")).collect::<Vec<_>>().join(","));
            Ok(true)
        }
    }
}
