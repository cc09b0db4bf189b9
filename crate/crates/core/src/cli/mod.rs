//! Command line front end: config ingestion, suite dispatch and ordered,
//! byte-reproducible emission of CSV and JSON results.

pub mod config;
pub mod suites;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use config::{ExperimentConfig, Suite};
use suites::{run_suite, Assertion, Row, SuiteOutput};

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub suite: Suite,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Serialize)]
struct Bundle<'a> {
    suite: &'a str,
    config_hash: &'a str,
    master_seed: u64,
    passed: bool,
    assertions: &'a [Assertion],
    rows: &'a [Row],
    notes: &'a [String],
    report: &'a Value,
    config: &'a ExperimentConfig,
}

/// Outcome of a run: the resolved config and the suite output.
pub struct RunResult {
    pub config: ExperimentConfig,
    pub hash: String,
    pub output: SuiteOutput,
    pub csv: String,
    pub json: String,
}

impl RunResult {
    pub fn passed(&self) -> bool {
        self.output.assertions.iter().all(|a| a.passed)
    }
}

pub fn load_config(suite: Suite, path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::parse(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig::new(suite),
    };
    match cfg.experiment {
        Some(s) if s != suite => {
            return Err(Error::Config(format!("experiment: config names {}, command line names {}", s.name(), suite.name())))
        }
        _ => cfg.experiment = Some(suite),
    }
    if let Some(s) = seed {
        cfg.master_seed = Some(s);
    }
    Ok(cfg)
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

/// Runs the suite and renders its CSV and JSON without touching the disk.
pub fn execute(suite: Suite, mut cfg: ExperimentConfig) -> Result<RunResult> {
    let output = run_suite(suite, &mut cfg)?;
    let hash = cfg.hash();
    let mut csv = String::from("name,mean,stderr,n,config_hash\n");
    for r in &output.rows {
        let _ = writeln!(csv, "{},{},{},{},{}", r.name, fmt_f64(r.mean), fmt_f64(r.stderr), r.n, hash);
    }
    let bundle = Bundle {
        suite: suite.name(),
        config_hash: &hash,
        master_seed: cfg.master_seed.unwrap_or_default(),
        passed: output.assertions.iter().all(|a| a.passed),
        assertions: &output.assertions,
        rows: &output.rows,
        notes: &output.notes,
        report: &output.report,
        config: &cfg,
    };
    let json = serde_json::to_string_pretty(&bundle).map_err(|e| Error::Numerical(e.to_string()))? + "\n";
    Ok(RunResult { config: cfg, hash, output, csv, json })
}

/// Human-readable summary: one line per assertion, then the rows.
pub fn summary(suite: Suite, r: &RunResult) -> String {
    let mut s = format!("{} config_hash={}\n", suite.name(), r.hash);
    for a in &r.output.assertions {
        let _ = writeln!(s, "{} {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    for row in &r.output.rows {
        let _ = writeln!(s, "  {} = {} ± {} (n={})", row.name, fmt_f64(row.mean), fmt_f64(row.stderr), row.n);
    }
    for n in &r.output.notes {
        let _ = writeln!(s, "  note: {n}");
    }
    s
}

/// Full command: returns the process exit code.
pub fn run(opts: &RunOptions) -> i32 {
    match run_inner(opts) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_inner(opts: &RunOptions) -> Result<i32> {
    let cfg = load_config(opts.suite, opts.config.as_deref(), opts.seed)?;
    let result = match opts.threads {
        Some(0) => return Err(Error::Config("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| execute(opts.suite, cfg))?,
        None => execute(opts.suite, cfg)?,
    };
    std::fs::create_dir_all(&opts.out)?;
    let stem = opts.suite.name();
    std::fs::write(opts.out.join(format!("{stem}.csv")), &result.csv)?;
    std::fs::write(opts.out.join(format!("{stem}.json")), &result.json)?;
    print!("{}", summary(opts.suite, &result));
    Ok(if result.passed() { 0 } else { 1 })
}
