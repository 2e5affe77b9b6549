use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use risbench::harness::{self, ControlParams, HarnessError, Outcome, RunConfig};

#[derive(Parser)]
#[command(name = "risbench", version, about = "Reflecting-surface pattern simulator and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random draw; overrides the config's `ga.seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides the config's `output_dir`
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Field pattern and pixmap of a fixed configuration
    Simulate(Common),
    /// Genetic synthesis against a benchmark, then evaluation
    Optimize(Common),
    /// Metrics of an achieved pattern CSV
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        achieved: PathBuf,
        /// Reference pattern CSV; defaults to the cached ideal-surface pattern
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Benchmark id or JSON path; overrides the config's `benchmark_ref`
        #[arg(long)]
        benchmark: Option<String>,
    },
    /// Optimise and evaluate once per control-group size
    SweepGrouping {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        groups: Vec<usize>,
    },
    /// Control complexity and power of the bundled cells
    Table1 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        json: bool,
    },
}

fn load(common: &Common) -> Result<RunConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.ga.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("--threads: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Outcome, HarnessError> {
    match cli.command {
        Command::Simulate(c) => harness::cmd_simulate(&load(&c)?),
        Command::Optimize(c) => harness::cmd_optimize(&load(&c)?),
        Command::Evaluate {
            common,
            achieved,
            reference,
            benchmark,
        } => {
            let mut cfg = load(&common)?;
            if let Some(b) = benchmark {
                cfg.benchmark_ref = b;
            }
            harness::cmd_evaluate(&cfg, &achieved, reference.as_deref())
        }
        Command::SweepGrouping { common, groups } => Ok(harness::cmd_sweep_grouping(&load(&common)?, &groups)?.1),
        Command::Table1 { common, json } => {
            let params = match &common.config {
                Some(_) => load(&common)?.control,
                None => ControlParams::default(),
            };
            harness::cmd_table1(&params, json)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{}", out.stdout);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("risbench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
