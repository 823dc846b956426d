use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uccap_cli::{cmd_analyze, cmd_decide, cmd_evaluate, cmd_simulate, cmd_train, CommandArgs};

#[derive(Parser)]
#[command(
    name = "uccap",
    version,
    about = "Capability decision risk from finite-sample Cpk estimates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-dimension capability, risk and decision chain.
    Analyze(Common),
    /// Fit the residual model on split-sample soft targets.
    Train(Common),
    /// Nested Monte Carlo calibration study.
    Simulate(Common),
    /// Score a trained model on a dataset.
    Evaluate(Common),
    /// Accept/reject from a CSV of risk probabilities.
    Decide(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model JSON from `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides UCCAP_SEED and the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl From<Common> for CommandArgs {
    fn from(c: Common) -> Self {
        CommandArgs {
            config: c.config,
            data: c.data,
            model: c.model,
            out: c.out,
            seed: c.seed,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(c) => cmd_analyze(&c.into()),
        Command::Train(c) => cmd_train(&c.into()),
        Command::Simulate(c) => cmd_simulate(&c.into()),
        Command::Evaluate(c) => cmd_evaluate(&c.into()),
        Command::Decide(c) => cmd_decide(&c.into()),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
    }
}
