use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use fewshot::cli::{run, Command, Invocation};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Write the configured synthetic dataset as CSV.
    Synth,
    /// Train a model and write its checkpoint and history.
    Train,
    /// Evaluate a trained checkpoint on the test classes.
    Eval,
    /// Train and evaluate one model per (way, shot) cell.
    Sweep,
    /// Compare analytic gradients with finite differences.
    Gradcheck,
}

#[derive(Debug, Parser)]
#[command(name = "fewshot", version, about = "Episodic few-shot training and evaluation")]
struct Args {
    command: Cmd,
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set episode.shot=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match args.command {
        Cmd::Synth => Command::Synth,
        Cmd::Train => Command::Train,
        Cmd::Eval => Command::Eval,
        Cmd::Sweep => Command::Sweep,
        Cmd::Gradcheck => Command::Gradcheck,
    };
    let inv = Invocation { command, config: args.config, overrides: args.overrides, out: args.out };
    match run(&inv) {
        Ok(outcome) => {
            println!("{}", outcome.summary.trim_end());
            for a in &outcome.artifacts {
                println!("wrote {}", a.display());
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
