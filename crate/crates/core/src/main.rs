use std::path::PathBuf;

use clap::Parser;
use rwre_lab::cli::config::Suite;
use rwre_lab::cli::{run, RunOptions};

/// Experiment runner for random walks in low-disorder random environments.
#[derive(Parser)]
#[command(name = "rwre-lab", version)]
struct Args {
    /// Suite to run.
    #[arg(value_enum)]
    suite: Suite,
    /// JSON experiment config; suite defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for `<suite>.csv` and `<suite>.json`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() {
    let a = Args::parse();
    let code = run(&RunOptions { suite: a.suite, config: a.config, out: a.out, seed: a.seed, threads: a.threads });
    std::process::exit(code);
}
