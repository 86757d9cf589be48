//! `svylasso` command-line front end.

mod config;
mod data;
mod error;
mod fit;
mod infer;
mod model;
mod simulate;

use clap::{Parser, Subcommand};

use crate::error::CliResult;

#[derive(Parser)]
#[command(name = "svylasso", version, about = "Survey-weighted Lasso logit with post-selection inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the penalized survey logit and write the fit as JSON
    Fit {
        #[command(flatten)]
        model: model::ModelFlags,
    },
    /// Tests and estimates for every coefficient, or every binary AME
    Infer {
        #[command(flatten)]
        model: model::ModelFlags,
        #[command(flatten)]
        infer: infer::InferFlags,
    },
    /// Monte Carlo rejection-frequency study
    Simulate(simulate::SimulateFlags),
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit { model } => fit::run(&model::ModelSettings::resolve::<()>(&model, None)?),
        Command::Infer { model, infer } => infer::run(&model::ModelSettings::resolve(&model, Some(&infer))?),
        Command::Simulate(flags) => simulate::run(&flags),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
