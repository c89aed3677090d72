mod commands;
mod config;

use clap::{Parser, Subcommand};

/// Twin-image super-resolution toolbox.
#[derive(Parser)]
#[command(name = "tisr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate simulated twin pairs and a dataset manifest.
    Simulate(ConfigArgs),
    /// Reconstruct an HR image from a twin pair by convex ADMM.
    Solve(ConfigArgs),
    /// Run a reference reconstructor (bicubic or IBP).
    Baseline(ConfigArgs),
    /// Score reconstructions against ground truth (PSNR/SSIM CSV).
    Evaluate(ConfigArgs),
    /// Estimate the subpixel shift between two images.
    Register(ConfigArgs),
    /// Sweep methods over the nonideal subpixel-shift protocol.
    Benchmark(ConfigArgs),
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Flat key=value configuration file (# comments allowed).
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Override or set a single key (repeatable), e.g. --set lambda=0.2.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

fn main() {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Solve(a) => ("solve", a),
        Command::Baseline(a) => ("baseline", a),
        Command::Evaluate(a) => ("evaluate", a),
        Command::Register(a) => ("register", a),
        Command::Benchmark(a) => ("benchmark", a),
    };

    let result = config::RunConfig::load(args.config.as_deref(), &args.sets).and_then(|cfg| {
        match name {
            "simulate" => commands::cmd_simulate(&cfg),
            "solve" => commands::cmd_solve(&cfg),
            "baseline" => commands::cmd_baseline(&cfg),
            "evaluate" => commands::cmd_evaluate(&cfg),
            "register" => commands::cmd_register(&cfg),
            "benchmark" => commands::cmd_benchmark(&cfg),
            _ => unreachable!(),
        }
    });

    if let Err(err) = result {
        eprintln!("tisr {name}: error: {err:#}");
        std::process::exit(1);
    }
}
