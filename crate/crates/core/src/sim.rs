//! Receding-horizon simulation driver, summaries and timing benchmark.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::coalition::{
    merge_pass, redistribute, split_pass, CoalitionStructure, DecisionLog, Negotiation,
    ProtocolMode, SplitCandidates, DEFAULT_MAX_BLOCK,
};
use crate::error::{Error, Result};
use crate::heuristic::{run_heuristic_epoch, HeuristicConfig};
use crate::model::{catch_per_boat, step_dynamics, EffortMatrix, ModelParams};
use crate::mpc::{solve_structure, CommMode, MpcConfig, StructureRequest};

/// Version of the exported trace and summary layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Grand,
    Isolated,
    Controlled,
    Accelerated,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Grand,
        Strategy::Controlled,
        Strategy::Accelerated,
        Strategy::Isolated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Grand => "grand",
            Strategy::Isolated => "isolated",
            Strategy::Controlled => "controlled",
            Strategy::Accelerated => "accelerated",
        }
    }

    fn adapts(self) -> bool {
        matches!(self, Strategy::Controlled | Strategy::Accelerated)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ModelParams,
    pub mpc: MpcConfig,
    pub heuristic: HeuristicConfig,
    pub strategy: Strategy,
    /// Ignored by the grand and isolated baselines.
    pub mode: ProtocolMode,
    pub total_days: usize,
    /// Structure decisions happen at the start of every day divisible by this.
    pub epoch_days: usize,
    pub max_block_size: usize,
}

impl RunConfig {
    pub fn new(params: ModelParams, strategy: Strategy) -> Self {
        RunConfig {
            params,
            mpc: MpcConfig::default(),
            heuristic: HeuristicConfig::default(),
            strategy,
            mode: ProtocolMode::WithRedistribution,
            total_days: 720,
            epoch_days: 30,
            max_block_size: DEFAULT_MAX_BLOCK,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mpc.validate()?;
        self.heuristic.validate()?;
        if self.total_days == 0 {
            return Err(Error::validation("total_days must be >= 1"));
        }
        if self.epoch_days == 0 {
            return Err(Error::validation("epoch_days must be >= 1"));
        }
        if self.max_block_size == 0 {
            return Err(Error::validation("max_block_size must be >= 1"));
        }
        Ok(())
    }

    fn redistributes(&self) -> bool {
        self.strategy.adapts() && self.mode == ProtocolMode::WithRedistribution
    }

    fn initial_structure(&self) -> CoalitionStructure {
        let k = self.params.n_boats();
        match self.strategy {
            Strategy::Grand => CoalitionStructure::grand(k),
            _ => CoalitionStructure::singletons(k, self.max_block_size),
        }
    }
}

/// What happened on one simulated day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub day: usize,
    /// Stock at the start of the day.
    pub stock: Vec<f64>,
    /// Efforts actually applied.
    pub effort: EffortMatrix,
    pub raw_catch: Vec<f64>,
    /// Catch after redistribution inside merged coalitions.
    pub attributed_catch: Vec<f64>,
    /// Regions whose stock hit zero at the end of the day.
    pub clamped: Vec<usize>,
    pub structure: String,
}

/// Structure in force after a decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSnapshot {
    pub day: usize,
    pub epoch: usize,
    pub structure: CoalitionStructure,
    pub changed: bool,
    /// Predicted catch after each accepted heuristic iteration (accelerated only).
    pub objective_trace: Vec<f64>,
    /// Pairwise distances computed by the heuristic (accelerated only).
    pub distance_evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub strategy: Strategy,
    pub mode: ProtocolMode,
    pub days: Vec<DayRecord>,
    pub snapshots: Vec<EpochSnapshot>,
    pub decisions: DecisionLog,
    pub cumulative_raw: Vec<f64>,
    pub cumulative_attributed: Vec<f64>,
    pub final_stock: Vec<f64>,
    /// Wall-clock time per day; not exported.
    #[serde(skip)]
    pub timings: Vec<Duration>,
}

impl SimulationTrace {
    fn new(cfg: &RunConfig) -> Self {
        let k = cfg.params.n_boats();
        SimulationTrace {
            strategy: cfg.strategy,
            mode: cfg.mode,
            days: Vec::new(),
            snapshots: Vec::new(),
            decisions: DecisionLog::new(),
            cumulative_raw: vec![0.0; k],
            cumulative_attributed: vec![0.0; k],
            final_stock: cfg.params.initial_stock().to_vec(),
            timings: Vec::new(),
        }
    }

    pub fn final_structure(&self) -> Option<&CoalitionStructure> {
        self.snapshots.last().map(|s| &s.structure)
    }

    /// One row per day and boat.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["day", "boat", "structure", "raw_catch", "attributed_catch", "efforts", "stocks"])?;
        for d in &self.days {
            let stocks = join(&d.stock);
            for (k, row) in d.effort.rows().enumerate() {
                w.write_record([
                    d.day.to_string(),
                    (k + 1).to_string(),
                    d.structure.clone(),
                    d.raw_catch[k].to_string(),
                    d.attributed_catch[k].to_string(),
                    join(row),
                    stocks.clone(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Box<SimulationTrace>,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run aborted on day {}: {}", self.partial.days.len(), self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub fn run(cfg: &RunConfig) -> Result<SimulationTrace, RunFailure> {
    run_until(cfg, None)
}

/// Runs the simulation, giving up with [`Error::Timeout`] once `deadline` passes.
pub fn run_until(cfg: &RunConfig, deadline: Option<Instant>) -> Result<SimulationTrace, RunFailure> {
    let mut trace = SimulationTrace::new(cfg);
    match drive(cfg, deadline, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(RunFailure {
            error,
            partial: Box::new(trace),
        }),
    }
}

fn drive(cfg: &RunConfig, deadline: Option<Instant>, trace: &mut SimulationTrace) -> Result<()> {
    cfg.validate()?;
    let params = &cfg.params;
    let comm = match cfg.strategy {
        Strategy::Isolated => CommMode::None,
        _ => CommMode::Cross,
    };
    let mut structure = cfg.initial_structure();
    trace.snapshots.push(EpochSnapshot {
        day: 0,
        epoch: 0,
        structure: structure.clone(),
        changed: false,
        objective_trace: Vec::new(),
        distance_evaluations: 0,
    });
    let mut state = params.initial_state();
    let mut warm = None;
    let mut anchor: Option<Vec<f64>> = None;
    for day in 0..cfg.total_days {
        check_deadline(deadline)?;
        let started = Instant::now();
        let req = StructureRequest {
            state: &state,
            params,
            cfg: &cfg.mpc,
            comm,
            warm_start: warm.as_ref(),
            anchor: anchor.as_deref(),
        };
        let mut solution = solve_structure(&structure, &req)?;
        if cfg.strategy.adapts() && day > 0 && day % cfg.epoch_days == 0 {
            structure.epoch = day / cfg.epoch_days;
            let ctx = Negotiation {
                request: req,
                mode: cfg.mode,
                day,
                deadline,
            };
            let before = structure.clone();
            let mut objective_trace = Vec::new();
            let mut distance_evaluations = 0;
            if cfg.strategy == Strategy::Controlled {
                let merged = merge_pass(&structure, &solution, &ctx, &mut trace.decisions)?;
                let split = split_pass(
                    &merged.structure,
                    &merged.solution,
                    &ctx,
                    SplitCandidates::LedgerAndSingles,
                    &mut trace.decisions,
                )?;
                structure = split.structure;
                solution = split.solution;
            } else {
                let out = run_heuristic_epoch(&structure, &solution, &ctx, &cfg.heuristic, &mut trace.decisions)?;
                structure = out.structure;
                solution = out.solution;
                objective_trace = out.objective_trace;
                distance_evaluations = out.distance_evaluations;
            }
            let changed = !structure.same_partition(&before);
            if changed {
                log::info!("day {day}: structure {before} -> {structure}");
            }
            trace.snapshots.push(EpochSnapshot {
                day,
                epoch: structure.epoch,
                structure: structure.clone(),
                changed,
                objective_trace,
                distance_evaluations,
            });
        }

        let effort = solution.schedule.step(0).clone();
        let raw = catch_per_boat(&state, &effort, params)?;
        let attributed = if cfg.redistributes() {
            attribute(&structure, &raw)?
        } else {
            raw.clone()
        };
        let next = step_dynamics(&state, &effort, params)?;
        if next.was_clamped() {
            log::warn!("day {day}: stock clamped at zero in regions {:?}", next.clamped);
        }
        for k in 0..raw.len() {
            trace.cumulative_raw[k] += raw[k];
            trace.cumulative_attributed[k] += attributed[k];
        }
        trace.days.push(DayRecord {
            day,
            stock: state.stock.clone(),
            effort,
            raw_catch: raw,
            attributed_catch: attributed,
            clamped: next.clamped.clone(),
            structure: structure.to_string(),
        });
        trace.final_stock = next.stock.clone();
        state = next;
        warm = Some(solution.schedule.shifted());
        anchor = Some(solution.equilibrium_stock);
        trace.timings.push(started.elapsed());
    }
    Ok(())
}

fn check_deadline(deadline: Option<Instant>) -> Result<()> {
    match deadline {
        Some(d) if Instant::now() >= d => Err(Error::Timeout),
        _ => Ok(()),
    }
}

/// Splits each block's raw catch by its merge ratios.
fn attribute(structure: &CoalitionStructure, raw: &[f64]) -> Result<Vec<f64>> {
    let mut out = raw.to_vec();
    for (block, tree) in structure.blocks().iter().zip(structure.ledger()) {
        if block.len() < 2 {
            continue;
        }
        let total: f64 = block.iter().map(|&k| raw[k]).sum();
        for (k, share) in redistribute(total, tree, block)? {
            out[k] = share;
        }
    }
    Ok(out)
}

/// Totals of a run, as printed and exported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub strategy: Strategy,
    pub mode: ProtocolMode,
    pub days: usize,
    pub total_raw: f64,
    pub total_attributed: f64,
    pub per_boat_raw: Vec<f64>,
    pub per_boat_attributed: Vec<f64>,
    pub final_structure: String,
    /// Day from which the structure never changed again.
    pub stabilization_day: usize,
    pub structure_changes: usize,
    pub clamp_events: usize,
    pub final_stock: Vec<f64>,
}

impl Summary {
    /// Per-boat catch as reported: attributed under redistribution, raw otherwise.
    pub fn per_boat(&self) -> &[f64] {
        &self.per_boat_attributed
    }

    pub fn total(&self) -> f64 {
        self.total_attributed
    }
}

pub fn summarize(trace: &SimulationTrace) -> Summary {
    let stabilization_day = trace
        .snapshots
        .iter()
        .rfind(|s| s.changed)
        .map_or(0, |s| s.day);
    Summary {
        schema_version: SCHEMA_VERSION,
        strategy: trace.strategy,
        mode: trace.mode,
        days: trace.days.len(),
        total_raw: trace.cumulative_raw.iter().sum(),
        total_attributed: trace.cumulative_attributed.iter().sum(),
        per_boat_raw: trace.cumulative_raw.clone(),
        per_boat_attributed: trace.cumulative_attributed.clone(),
        final_structure: trace
            .final_structure()
            .map(ToString::to_string)
            .unwrap_or_default(),
        stabilization_day,
        structure_changes: trace.snapshots.iter().filter(|s| s.changed).count(),
        clamp_events: trace.days.iter().map(|d| d.clamped.len()).sum(),
        final_stock: trace.final_stock.clone(),
    }
}

/// Mean wall-clock seconds per structure decision day of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub strategy: Strategy,
    pub n_regions: usize,
    pub n_boats: usize,
    /// `None` when the cell ran out of time.
    pub seconds_per_day: Option<f64>,
}

/// Times each config over `days` decision days.
///
/// Every cell runs `days + 1` days with a structure decision on each day after
/// the first; the first day (which never decides) is excluded from the mean.
/// Cells run one after another so their timings do not compete for cores.
pub fn benchmark(configs: &[RunConfig], days: usize, budget: Option<Duration>) -> Result<Vec<BenchRow>> {
    if days == 0 {
        return Err(Error::validation("benchmark needs at least one day"));
    }
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let mut cell = cfg.clone();
        cell.total_days = days + 1;
        cell.epoch_days = 1;
        cell.validate()?;
        let deadline = budget.map(|b| Instant::now() + b);
        let seconds_per_day = match run_until(&cell, deadline) {
            Ok(trace) => {
                let timed = &trace.timings[1..];
                Some(timed.iter().map(Duration::as_secs_f64).sum::<f64>() / timed.len() as f64)
            }
            Err(RunFailure {
                error: Error::Timeout,
                ..
            }) => None,
            Err(f) => return Err(f.error),
        };
        rows.push(BenchRow {
            strategy: cfg.strategy,
            n_regions: cfg.params.n_regions(),
            n_boats: cfg.params.n_boats(),
            seconds_per_day,
        });
    }
    Ok(rows)
}

/// Total catch per strategy, in the given order.
pub fn comparison(summaries: &[Summary]) -> BTreeMap<Strategy, f64> {
    summaries.iter().map(|s| (s.strategy, s.total())).collect()
}
