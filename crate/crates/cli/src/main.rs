use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vis_yield_cli::commands::{self, Overrides};
use vis_yield_cli::config::parse_seeds;
use vis_yield_cli::EXIT_ERROR;

#[derive(Parser)]
#[command(version, about = "Rare-event failure-probability estimation with variational importance sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Comma-separated seeds, overriding `seeds`.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "VIS_YIELD_THREADS")]
    threads: Option<usize>,
    /// Print nothing but errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run one estimator over every seed.
    Estimate,
    /// Run several estimators on the same seeds and tabulate them.
    Compare,
    /// Optimize a parameterized design.
    Optimize,
}

fn run(cli: &Cli) -> Result<i32, String> {
    let Some(path) = &cli.config else {
        return Err("missing --config <path>".into());
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err("--threads must be at least 1".into());
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    let overrides = Overrides {
        output: cli.output.clone(),
        seeds: cli.seeds.as_deref().map(parse_seeds).transpose().map_err(|e| e.to_string())?,
        quiet: cli.quiet,
    };
    let cfg = overrides.load(path).map_err(|e| e.to_string())?;
    let code = match cli.command {
        Command::Estimate => commands::estimate(&cfg, cli.quiet).map(|r| r.1),
        Command::Compare => commands::compare(&cfg, cli.quiet).map(|r| r.1),
        Command::Optimize => commands::optimize(&cfg, cli.quiet).map(|r| r.1),
    };
    code.map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
