//! `surrogates`: run seeded experiments, the gradient and oracle suites, and
//! the acceptance suite.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 numeric abort,
//! 3 a check or acceptance criterion failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use surrogates::harness::{run, run_acceptance, ExperimentConfig, ExperimentKind, RunReport};
use surrogates::Error;

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "SURROGATES_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "runs";
const ACCEPTANCE_FILE: &str = "acceptance.json";

#[derive(Parser)]
#[command(name = "surrogates", version, about = "Differentiable surrogate losses: experiments and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference check of every registered loss.
    Gradcheck(Common),
    /// Exact-metric oracles: edit distance and IoU.
    Oracles(Common),
    /// The full acceptance suite, one line per criterion.
    Accept {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Replaces the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; beats the config's `output` and the environment.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path override such as `rsk.steps=100`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

enum Failure {
    Error(Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn out_dir(flag: Option<PathBuf>, config: Option<&Path>) -> PathBuf {
    flag.or_else(|| config.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn run_experiment(base: ExperimentConfig, common: Common) -> Result<(), Failure> {
    let mut config = base.with_overrides(&common.overrides)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    let dir = out_dir(common.out, config.output.as_deref());
    let report = run(&config)?;
    report.write(&dir)?;
    print_report(&report, &dir);
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn print_report(report: &RunReport, dir: &Path) {
    println!("{} seed {}: {:.1}s", report.config.kind.name(), report.seed, report.wall_clock_secs);
    for (k, v) in &report.summary {
        println!("  {k} = {v}");
    }
    for c in &report.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {}: {:e} {} {:e}", c.name, c.value, c.relation, c.threshold);
    }
    println!("report written to {}", dir.display());
}

fn accept(seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let report = run_acceptance(seed.unwrap_or(0))?;
    for line in report.lines() {
        println!("{line}");
    }
    let dir = out_dir(out, None);
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    let path = dir.join(ACCEPTANCE_FILE);
    std::fs::write(&path, report.to_json()).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let passed = report.criteria.iter().filter(|c| c.passed).count();
    println!("{passed}/{} criteria passed; report written to {}", report.criteria.len(), path.display());
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, common } => {
            ExperimentConfig::load(&config).map_err(Failure::from).and_then(|c| run_experiment(c, common))
        }
        Command::Gradcheck(common) => run_experiment(ExperimentConfig::new(ExperimentKind::Gradcheck), common),
        Command::Oracles(common) => run_experiment(ExperimentConfig::new(ExperimentKind::OracleSuite), common),
        Command::Accept { seed, out } => accept(seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(3),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::NumericAbort { .. } | Error::NonFinite(_) | Error::Domain { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
