mod args;
mod commands;
mod config;
mod csvio;
mod error;
mod report;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Estimate(a) => commands::cmd_estimate(a),
        Command::Analyze(a) => commands::cmd_analyze(a),
        Command::Optimize(a) => commands::cmd_optimize(a),
        Command::Chain(a) => commands::cmd_chain(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
