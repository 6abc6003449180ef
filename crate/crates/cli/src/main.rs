mod args;
mod commands;
mod data;
mod error;
mod output;

use args::{Cli, Command};
use clap::Parser;

/// Sizes the rayon pool from `ENVCORE_THREADS` when it is set.
fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("ENVCORE_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("ENVCORE_THREADS='{v}' is not a positive integer"))?;
    if n == 0 {
        return Err("ENVCORE_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
    let res = match &cli.command {
        Command::Fit(a) => commands::run_fit(a),
        Command::Simulate(a) => commands::run_simulate(a),
    };
    if let Err(e) = res {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
