//! `ising-causal`: batch driver for the estimators.
//!
//! Exit codes: 0 ok, 1 i/o, 2 spec error, 3 method precondition,
//! 4 numerical failure. Nothing is written unless the command succeeds.

mod commands;
mod fail;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use fail::Failure;
use spec::ExperimentSpec;

/// Worker thread count; unset means one per core.
const THREADS_ENV: &str = "ISING_CAUSAL_THREADS";

#[derive(Parser)]
#[command(name = "ising-causal", version, about = "Treatment effects under Ising-type interference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment spec (TOML, schema causal-ising/1).
    spec: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an interaction matrix and one observed dataset.
    Generate(Common),
    /// Estimate DE and IE with one method.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// oracle, block, amp or glauber; defaults to `method.name`.
        #[arg(long)]
        method: Option<String>,
    },
    /// Exact DE and IE by enumeration.
    Oracle(Common),
    /// Pseudo-likelihood fit on generated or simulated data.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Directory written by `generate`; simulated from the spec if absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also run this estimator with the fitted parameters.
        #[arg(long)]
        plug_in: Option<String>,
    },
    /// Large-n limits of DE and IE.
    Limits(Common),
    /// Glauber chains from all-plus and all-minus, with traces.
    Mixing(Common),
    /// Every method in `method.bench`, with wall times.
    Bench(Common),
}

fn configure_threads() -> Result<usize, Failure> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Failure::spec(format!("{THREADS_ENV}={v} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::io(e.to_string()))?;
    }
    Ok(rayon::current_num_threads())
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, Failure> {
    let threads = configure_threads()?;
    let start = Instant::now();
    let (name, common) = match &cli.command {
        Command::Generate(c) => ("generate", c),
        Command::Estimate { common, .. } => ("estimate", common),
        Command::Oracle(c) => ("oracle", c),
        Command::Fit { common, .. } => ("fit", common),
        Command::Limits(c) => ("limits", c),
        Command::Mixing(c) => ("mixing", c),
        Command::Bench(c) => ("bench", c),
    };
    let spec = ExperimentSpec::load(&common.spec)?;
    let artifacts = match &cli.command {
        Command::Generate(_) => commands::generate(&spec)?,
        Command::Estimate { method, .. } => {
            commands::estimate(&spec, method.as_deref().unwrap_or(&spec.method.name))?
        }
        Command::Oracle(_) => commands::estimate(&spec, "oracle")?,
        Command::Fit { data, plug_in, .. } => commands::fit(&spec, data.as_deref(), plug_in.as_deref())?,
        Command::Limits(_) => commands::limits(&spec)?,
        Command::Mixing(_) => commands::mixing(&spec)?,
        Command::Bench(_) => commands::bench(&spec)?,
    };
    let dir = common.out.clone().unwrap_or_else(|| spec.output.dir.clone());
    artifacts.commit(&dir, name, start.elapsed().as_secs_f64(), threads)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
