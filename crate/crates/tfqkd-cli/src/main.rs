//! `tfqkd`: rate curves, repeaterless bounds, crossover search, Monte Carlo
//! protocol runs, and phase-drift traces for twin-field quantum key
//! distribution. Output is CSV stamped with a reproducible run manifest.

mod commands;
mod config;
mod output;

use clap::Parser;

fn main() {
    let cli = commands::Cli::parse();
    if let Err(e) = commands::run(cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
