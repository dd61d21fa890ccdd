//! `ccm`: simulate coalitional control of fishing fleets.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 solver failure, 4 I/O failure.

mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use ccm_core::coalition::ProtocolMode;
use ccm_core::sim::{self, RunConfig, RunFailure, Strategy, Summary};
use ccm_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use config::{parse_size, resize_fleet, ConfigFile};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Solver(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Solver(m) => write!(f, "solver failure: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<RunFailure> for Failure {
    fn from(f: RunFailure) -> Self {
        match f.error {
            Error::Validation(_) | Error::Dimension { .. } => Failure::Config(f.to_string()),
            _ => Failure::Solver(f.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "ccm", version, about = "Coalitional MPC simulator for fishing fleets")]
struct Cli {
    /// Worker threads for independent runs and candidate solves.
    #[arg(long, global = true, env = "CCM_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one strategy (or all four with --compare-all).
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        /// Run all four strategies and print a comparison.
        #[arg(long, conflicts_with = "strategy")]
        compare_all: bool,
    },
    /// Simulate all four strategies and print a comparison.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Time strategies per simulated day over a grid of instance sizes.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Instance sizes as regions x boats, e.g. 4x6,4x12.
        #[arg(long, value_delimiter = ',', default_value = "4x6")]
        sizes: Vec<String>,
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["grand", "controlled", "accelerated", "isolated"])]
        strategies: Vec<StrategyArg>,
        /// Per-cell time budget in seconds; cells that exceed it are reported as NA.
        #[arg(long)]
        budget: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config file; defaults to the reference instance.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Simulated days (for benchmark: timed days per cell, default 30).
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    epoch_days: Option<usize>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Grand,
    Isolated,
    Controlled,
    Accelerated,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Grand => Strategy::Grand,
            StrategyArg::Isolated => Strategy::Isolated,
            StrategyArg::Controlled => Strategy::Controlled,
            StrategyArg::Accelerated => Strategy::Accelerated,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    With,
    Without,
}

impl Common {
    fn load(&self) -> Result<ConfigFile, Failure> {
        let mut file = ConfigFile::load(self.config.as_deref())?;
        if let Some(m) = self.mode {
            file.mode = match m {
                ModeArg::With => ProtocolMode::WithRedistribution,
                ModeArg::Without => ProtocolMode::WithoutRedistribution,
            };
        }
        if let Some(d) = self.days {
            file.total_days = d;
        }
        if let Some(e) = self.epoch_days {
            file.epoch_days = e;
        }
        if let Some(o) = &self.out {
            file.output_dir = o.clone();
        }
        Ok(file)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ccm: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::Config("worker count must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Run {
            common,
            strategy,
            compare_all,
        } => {
            let file = common.load()?;
            if compare_all {
                compare(&file)
            } else {
                let strategy = strategy.map_or(file.strategy, Strategy::from);
                run_one(&file, strategy)
            }
        }
        Command::Compare { common } => compare(&common.load()?),
        Command::Benchmark {
            common,
            sizes,
            strategies,
            budget,
        } => {
            let days = common.days.unwrap_or(BENCH_DAYS);
            let file = common.load()?;
            let sizes = sizes
                .iter()
                .map(|s| parse_size(s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(Failure::Config)?;
            let strategies: Vec<Strategy> = strategies.into_iter().map(Strategy::from).collect();
            let budget = match budget {
                Some(b) if !(b >= 0.0 && b.is_finite()) => {
                    return Err(Failure::Config("budget must be a non-negative number of seconds".into()))
                }
                b => b.map(Duration::from_secs_f64),
            };
            benchmark(&file, &sizes, &strategies, days, budget)
        }
    }
}

fn simulate(cfg: &RunConfig) -> Result<(sim::SimulationTrace, Summary), Failure> {
    log::info!(
        "{} run: {} days, horizon {}, band {:?}",
        cfg.strategy,
        cfg.total_days,
        cfg.mpc.horizon,
        cfg.mpc.sustainability_radius
    );
    let trace = sim::run(cfg)?;
    let summary = sim::summarize(&trace);
    Ok((trace, summary))
}

fn header(file: &ConfigFile) {
    println!(
        "Horizon {}, sustainability band {:?}, epoch {} days",
        file.mpc.horizon, file.mpc.sustainability_radius, file.epoch_days
    );
}

fn run_one(file: &ConfigFile, strategy: Strategy) -> Result<(), Failure> {
    let cfg = file.run_config(strategy)?;
    report::ensure_dir(&file.output_dir)?;
    header(file);
    let (trace, summary) = simulate(&cfg)?;
    report::write_run(&file.output_dir, &trace, &summary)?;
    print!("{}", report::summary_table(&summary));
    Ok(())
}

fn compare(file: &ConfigFile) -> Result<(), Failure> {
    let configs = Strategy::ALL
        .iter()
        .map(|&s| file.run_config(s))
        .collect::<Result<Vec<_>, _>>()?;
    report::ensure_dir(&file.output_dir)?;
    header(file);
    let results = configs
        .par_iter()
        .map(simulate)
        .collect::<Result<Vec<_>, _>>()?;
    let mut summaries = Vec::with_capacity(results.len());
    for (trace, summary) in results {
        report::write_run(&file.output_dir, &trace, &summary)?;
        print!("{}", report::summary_table(&summary));
        println!();
        summaries.push(summary);
    }
    report::write_comparison(&file.output_dir, &summaries)?;
    print!("{}", report::comparison_table(&summaries));
    Ok(())
}

fn benchmark(
    file: &ConfigFile,
    sizes: &[(usize, usize)],
    strategies: &[Strategy],
    days: usize,
    budget: Option<Duration>,
) -> Result<(), Failure> {
    let mut configs = Vec::new();
    for &(n, k) in sizes {
        let params = resize_fleet(&file.params, n, k)?;
        for &s in strategies {
            let mut cfg = file.run_config(s)?;
            cfg.params = params.clone();
            configs.push(cfg);
        }
    }
    report::ensure_dir(&file.output_dir)?;
    let rows = sim::benchmark(&configs, days, budget).map_err(|e| match e {
        Error::Validation(_) | Error::Dimension { .. } => Failure::Config(e.to_string()),
        other => Failure::Solver(other.to_string()),
    })?;
    report::write_benchmark(&file.output_dir, &rows)?;
    print!("{}", report::benchmark_table(&rows, sizes, strategies));
    Ok(())
}

/// Timed days per benchmark cell: one default epoch of daily decisions.
const BENCH_DAYS: usize = 30;
