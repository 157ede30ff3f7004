mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "loopgnss", version, about = "GNSS trajectory estimation with carrier-phase loop closures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario: observation file, truth trajectory and satellite states.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a trajectory from observations and satellite states.
    Solve {
        #[arg(long)]
        obs: PathBuf,
        #[arg(long = "sat-states")]
        sat_states: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip carrier-phase loop closures.
        #[arg(long = "no-trrtk")]
        no_trrtk: bool,
        /// Leave pseudorange rows out of the graph.
        #[arg(long = "no-pseudorange-factors")]
        no_pseudorange_factors: bool,
    },
    /// Compare an estimated trajectory with the truth.
    Evaluate {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        /// Method name in the report; defaults to the label of the solve run.
        #[arg(long)]
        label: Option<String>,
    },
    /// Summarize an exported graph.
    Inspect {
        #[arg(long)]
        graph: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => commands::simulate(&config, &out),
        Command::Solve { obs, sat_states, config, out, no_trrtk, no_pseudorange_factors } => {
            commands::solve(&commands::SolveArgs {
                obs,
                sat_states,
                config,
                out,
                use_trrtk: !no_trrtk,
                use_pseudorange: !no_pseudorange_factors,
            })
        }
        Command::Evaluate { est, truth, json, label } => commands::evaluate(&est, &truth, json, label.as_deref()),
        Command::Inspect { graph } => commands::inspect(&graph),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::NotConverged { .. } => 3,
            CliError::Io { .. } => 4,
            CliError::Solver(_) => 1,
        }
    }
}
