//! Batch pipeline driver: ingestion, detection, summaries, Monte Carlo
//! tests, and reports, wired from a single JSON config per run.
//!
//! Set `CUBETOP_LOG=info` (or `debug`) for progress logging.

mod config;
mod runner;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::Config;
use runner::Outputs;

#[derive(Parser)]
#[command(name = "cubetop", version, about = "Topological detection and testing for noisy image series")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect features in one summed frame; writes detection.csv.
    Detect,
    /// Summary-statistic time series over all windows; writes summary.csv.
    Summarize,
    /// Monte Carlo goodness-of-fit test on one window; writes gof.json.
    Gof,
    /// Shared-null multiple testing over the disjoint summed series;
    /// writes multitest.csv.
    Multitest,
    /// Synthetic ground truth + shot noise recovery metrics;
    /// writes recovery.csv and PGM frames.
    Simulate,
    /// Null-model diagnostics: lambda fit, DKW, autocorrelation,
    /// semivariogram.
    Diagnose,
    /// Persistence-based binarization; writes threshold.json + binary.pgm.
    Threshold,
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CUBETOP_LOG")).init();
    let cli = Cli::parse();

    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("--config is required"))?;
    let config = Config::load(config_path)?;
    let out = Outputs::new(&cli.out)?;

    let run = || -> anyhow::Result<()> {
        match cli.command {
            Command::Detect => runner::detect_cmd(&config, &out),
            Command::Summarize => runner::summarize_cmd(&config, &out),
            Command::Gof => runner::gof_cmd(&config, &out, cli.seed),
            Command::Multitest => runner::multitest_cmd(&config, &out, cli.seed),
            Command::Simulate => runner::simulate_cmd(&config, &out, cli.seed),
            Command::Diagnose => runner::diagnose_cmd(&config, &out),
            Command::Threshold => runner::threshold_cmd(&config, &out),
        }
    };

    match cli.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()?
            .install(run),
        None => run(),
    }
}
