use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlmc_cli::config::LevelRange;
use mlmc_cli::{run, CliError, Mode, OutputFormat, Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "mlmc", version, about = "Multilevel Monte Carlo pricing for scalar SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run manifest; flags below override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (default: standard output).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<OutputFormat>,
    /// Inclusive level range, e.g. 3..8.
    #[arg(long, global = true)]
    levels: Option<LevelRange>,
    /// Samples per level (converge) or per bridge oracle (validate).
    #[arg(long, global = true)]
    samples: Option<u64>,
    /// Target root-mean-square error (price).
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Independent repetitions with consecutive seeds (price).
    #[arg(long, global = true)]
    repeat: Option<u32>,
    /// Leave the timestamp out of JSON output.
    #[arg(long, global = true)]
    no_timestamp: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fixed-size estimates per level with fitted decay rates.
    Converge,
    /// Adaptive estimate to a target accuracy.
    Price,
    /// Run the sampler and scheme oracle suites.
    Validate,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mode = match cli.command {
        Command::Converge => Mode::Converge,
        Command::Price => Mode::Price,
        Command::Validate => Mode::Validate,
    };
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(
        mode,
        Overrides {
            seed: cli.seed,
            out: cli.out,
            format: cli.format,
            levels: cli.levels,
            samples: cli.samples,
            eps: cli.eps,
            repeat: cli.repeat,
        },
    );
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} worker threads: {e}")))?;
    }
    run::run(&cfg, cli.samples, !cli.no_timestamp)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mlmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
