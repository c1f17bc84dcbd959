use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod output;

#[derive(Parser)]
#[command(
    name = "cmaff",
    version,
    about = "RGB/thermal feature fusion and detection tooling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse an RGB/thermal feature-map pair
    Fuse(commands::fuse::Args),
    /// Check the analytic gradients against central differences
    Gradcheck(commands::gradcheck::Args),
    /// Evaluate detections against ground truth
    Eval(commands::eval::Args),
    /// Convert VEDAI oriented annotations to normalized label lines
    Convert(commands::convert::Args),
    /// Report parameter counts and fuse timings
    Bench(commands::bench::Args),
    /// Build mosaics from aligned RGB/IR tiles
    Mosaic(commands::mosaic::Args),
    /// Summarize label files
    Stats(commands::stats::Args),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fuse(a) => commands::fuse::run(a),
        Command::Gradcheck(a) => commands::gradcheck::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Convert(a) => commands::convert::run(a),
        Command::Bench(a) => commands::bench::run(a),
        Command::Mosaic(a) => commands::mosaic::run(a),
        Command::Stats(a) => commands::stats::run(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
