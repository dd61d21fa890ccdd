//! Text tables and output files.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use ccm_core::sim::{BenchRow, SimulationTrace, Strategy, Summary};

use crate::Failure;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Writes `<strategy>_trace.csv`, `<strategy>_decisions.csv` and `<strategy>_summary.json`.
pub fn write_run(dir: &Path, trace: &SimulationTrace, summary: &Summary) -> Result<(), Failure> {
    let name = trace.strategy.name();
    let path = dir.join(format!("{name}_trace.csv"));
    trace.write_csv(create(&path)?).map_err(|e| io_err(&path, e))?;
    let path = dir.join(format!("{name}_decisions.csv"));
    trace.decisions.write_csv(create(&path)?).map_err(|e| io_err(&path, e))?;
    let path = dir.join(format!("{name}_summary.json"));
    serde_json::to_writer_pretty(create(&path)?, summary).map_err(|e| io_err(&path, e))
}

pub fn summary_table(s: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Strategy: {} ({:?}), {} days", s.strategy, s.mode, s.days);
    let _ = writeln!(out, "Total fish caught: {:.2}", s.total());
    let _ = writeln!(out, "{:>5} {:>14} {:>14}", "boat", "catch", "raw catch");
    for (k, (a, r)) in s.per_boat_attributed.iter().zip(&s.per_boat_raw).enumerate() {
        let _ = writeln!(out, "{:>5} {:>14.2} {:>14.2}", k + 1, a, r);
    }
    let _ = writeln!(out, "Final structure: {}", s.final_structure);
    let _ = writeln!(out, "Stabilization day: {}", s.stabilization_day);
    if s.clamp_events > 0 {
        let _ = writeln!(out, "Stock clamp events: {}", s.clamp_events);
    }
    out
}

pub fn comparison_table(summaries: &[Summary]) -> String {
    let mut out = String::from("Summary of total fish caught of each coalition control method\n");
    let _ = writeln!(out, "{:<12} {:>14}", "method", "total");
    for s in summaries {
        let _ = writeln!(out, "{:<12} {:>14.2}", s.strategy.name(), s.total());
    }
    out
}

pub fn write_comparison(dir: &Path, summaries: &[Summary]) -> Result<(), Failure> {
    let path = dir.join("comparison.json");
    serde_json::to_writer_pretty(create(&path)?, summaries).map_err(|e| io_err(&path, e))
}

fn cell(row: Option<&BenchRow>) -> String {
    match row.and_then(|r| r.seconds_per_day) {
        Some(s) => format!("{s:.4}"),
        None => "NA".to_string(),
    }
}

/// Grid with one line per size and one column per strategy.
pub fn benchmark_table(rows: &[BenchRow], sizes: &[(usize, usize)], strategies: &[Strategy]) -> String {
    let mut out = String::from("Seconds per simulated day\n");
    let _ = write!(out, "{:<8}", "size");
    for s in strategies {
        let _ = write!(out, " {:>12}", s.name());
    }
    out.push('\n');
    for &(n, k) in sizes {
        let _ = write!(out, "{:<8}", format!("{n}x{k}"));
        for &s in strategies {
            let row = rows.iter().find(|r| r.strategy == s && r.n_regions == n && r.n_boats == k);
            let _ = write!(out, " {:>12}", cell(row));
        }
        out.push('\n');
    }
    out
}

pub fn write_benchmark(dir: &Path, rows: &[BenchRow]) -> Result<(), Failure> {
    let path = dir.join("benchmark.csv");
    let mut text = String::from("strategy,regions,boats,seconds_per_day\n");
    for r in rows {
        let _ = writeln!(text, "{},{},{},{}", r.strategy.name(), r.n_regions, r.n_boats, cell(Some(r)));
    }
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}
