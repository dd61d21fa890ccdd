//! Merge and split negotiation between coalitions.
//!
//! Candidates are evaluated against the incumbent structure in canonical order and
//! accepted greedily: an accepted candidate becomes the incumbent for every later
//! comparison. Candidate solves are speculative and run in parallel batches; only
//! the acceptance scan is sequential, so results match a purely sequential pass.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::ledger::MergeTree;
use crate::coalition::log::{DecisionLog, DecisionRecord, PassKind};
use crate::coalition::structure::{CoalitionId, CoalitionStructure};
use crate::error::{Error, Result};
use crate::mpc::{solve_structure, MpcSolution, StructureRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    /// Merge when the joint optimum beats the sum of the parts; catch is shared by recorded ratios.
    WithRedistribution,
    /// Merge only when each side's own catch inside the merger beats its standalone optimum.
    WithoutRedistribution,
}

/// Merge test for two sides `m` and `n`.
///
/// `member_shares` is each side's own catch inside the merged coalition; required
/// without redistribution.
pub fn evaluate_merge(
    mode: ProtocolMode,
    merged_obj: f64,
    obj_m: f64,
    obj_n: f64,
    member_shares: Option<(f64, f64)>,
) -> Result<bool> {
    match mode {
        ProtocolMode::WithRedistribution => Ok(merged_obj >= obj_m + obj_n),
        ProtocolMode::WithoutRedistribution => {
            let (share_m, share_n) = member_shares.ok_or_else(|| {
                Error::validation("member shares are required without redistribution")
            })?;
            Ok(share_m >= obj_m && share_n >= obj_n)
        }
    }
}

/// Split test; `margin` is a non-negative slack the standalone optima must beat the merger by.
pub fn evaluate_split(
    mode: ProtocolMode,
    merged_obj: f64,
    obj_m: f64,
    obj_n: f64,
    member_shares: Option<(f64, f64)>,
    margin: f64,
) -> Result<bool> {
    match mode {
        ProtocolMode::WithRedistribution => Ok(merged_obj + margin < obj_m + obj_n),
        ProtocolMode::WithoutRedistribution => {
            let (share_m, share_n) = member_shares.ok_or_else(|| {
                Error::validation("member shares are required without redistribution")
            })?;
            Ok(share_m + margin < obj_m || share_n + margin < obj_n)
        }
    }
}

/// Shared inputs of a negotiation round.
#[derive(Debug, Clone, Copy)]
pub struct Negotiation<'a> {
    pub request: StructureRequest<'a>,
    pub mode: ProtocolMode,
    pub day: usize,
    pub deadline: Option<Instant>,
}

impl Negotiation<'_> {
    pub(crate) fn check_deadline(&self) -> Result<()> {
        match self.deadline {
            Some(d) if Instant::now() >= d => Err(Error::Timeout),
            _ => Ok(()),
        }
    }

    pub(crate) fn solve(&self, structure: &CoalitionStructure, warm: &MpcSolution) -> Result<MpcSolution> {
        let req = StructureRequest {
            warm_start: Some(&warm.schedule),
            ..self.request
        };
        solve_structure(structure, &req)
    }

    fn batch_size(&self) -> usize {
        rayon::current_num_threads().max(1)
    }
}

/// Structure after a pass together with its current MPC solution.
#[derive(Debug, Clone, PartialEq)]
pub struct PassOutcome {
    pub structure: CoalitionStructure,
    pub solution: MpcSolution,
}

fn side_total(sol: &MpcSolution, boats: &[usize]) -> f64 {
    boats.iter().map(|&k| sol.boat_objective[k]).sum()
}

pub(crate) fn share_ratio(a: f64, b: f64) -> f64 {
    if a + b > 0.0 {
        a / (a + b)
    } else {
        0.5
    }
}

struct Candidate {
    structure: CoalitionStructure,
    /// Boats of the two sides.
    side_a: Vec<usize>,
    side_b: Vec<usize>,
}

struct Evaluated {
    record: DecisionRecord,
    outcome: Option<PassOutcome>,
}

/// Greedy merge pass over ordered block pairs `(i, j)`, `i < j`.
pub fn merge_pass(
    structure: &CoalitionStructure,
    incumbent: &MpcSolution,
    ctx: &Negotiation<'_>,
    log: &mut DecisionLog,
) -> Result<PassOutcome> {
    let mut current = PassOutcome {
        structure: structure.clone(),
        solution: incumbent.clone(),
    };
    if structure.len() <= 1 {
        return Ok(current);
    }
    let mut cursor = (0usize, 1usize);
    loop {
        ctx.check_deadline()?;
        let pairs = pairs_from(&current.structure, cursor);
        if pairs.is_empty() {
            return Ok(current);
        }
        let mut accepted = None;
        for batch in pairs.chunks(ctx.batch_size()) {
            let results: Vec<Evaluated> = batch
                .par_iter()
                .map(|&(i, j)| evaluate_merge_candidate(&current, i, j, ctx))
                .collect::<Result<_>>()?;
            for (pos, ev) in results.into_iter().enumerate() {
                log.push(ev.record);
                if let Some(next) = ev.outcome {
                    accepted = Some((batch[pos], next));
                    break;
                }
            }
            if accepted.is_some() {
                break;
            }
            ctx.check_deadline()?;
        }
        match accepted {
            Some(((i, j), next)) => {
                current = next;
                // block j disappeared, so the next partner of i now sits at index j
                cursor = (i, j);
            }
            None => return Ok(current),
        }
    }
}

/// Mergeable pairs from `cursor` onwards in nested-loop order.
fn pairs_from(s: &CoalitionStructure, cursor: (usize, usize)) -> Vec<(usize, usize)> {
    let c = s.len();
    let mut out = Vec::new();
    for i in cursor.0..c {
        let start = if i == cursor.0 { cursor.1 } else { i + 1 };
        for j in start.max(i + 1)..c {
            if s.can_merge(i, j) {
                out.push((i, j));
            }
        }
    }
    out
}

fn evaluate_merge_candidate(
    current: &PassOutcome,
    i: usize,
    j: usize,
    ctx: &Negotiation<'_>,
) -> Result<Evaluated> {
    let s = &current.structure;
    let obj_m = current.solution.objective(s.id(i));
    let obj_n = current.solution.objective(s.id(j));
    let side_a = s.blocks()[i].clone();
    let side_b = s.blocks()[j].clone();
    let merged = s.merged(i, j, share_ratio(obj_m, obj_n))?;
    let candidate = Candidate {
        structure: merged,
        side_a,
        side_b,
    };
    let mut record = DecisionRecord {
        day: ctx.day,
        epoch: s.epoch,
        pass: PassKind::Merge,
        incumbent: s.to_string(),
        candidate: candidate.structure.to_string(),
        merged_objective: None,
        part_a: Some(obj_m),
        part_b: Some(obj_n),
        share_a: None,
        share_b: None,
        margin: None,
        accepted: false,
        note: String::new(),
    };
    let sol = match ctx.solve(&candidate.structure, &current.solution) {
        Ok(sol) => sol,
        Err(e @ Error::Timeout) => return Err(e),
        Err(e) => {
            log::warn!("merge candidate {} rejected: {e}", record.candidate);
            record.note = format!("solver failure: {e}");
            return Ok(Evaluated {
                record,
                outcome: None,
            });
        }
    };
    let merged_id = CoalitionId(candidate.side_a[0].min(candidate.side_b[0]));
    let merged_obj = sol.objective(merged_id);
    let share_a = side_total(&sol, &candidate.side_a);
    let share_b = side_total(&sol, &candidate.side_b);
    let ok = evaluate_merge(ctx.mode, merged_obj, obj_m, obj_n, Some((share_a, share_b)))?;
    record.merged_objective = Some(merged_obj);
    record.share_a = Some(share_a);
    record.share_b = Some(share_b);
    record.margin = Some(merged_obj - (obj_m + obj_n));
    record.accepted = ok;
    Ok(Evaluated {
        record,
        outcome: ok.then_some(PassOutcome {
            structure: candidate.structure,
            solution: sol,
        }),
    })
}

/// Which split candidates a pass considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitCandidates {
    /// Undo the most recent merge only.
    LedgerOnly,
    /// Undo the most recent merge, then try removing each single boat.
    LedgerAndSingles,
}

/// Greedy split pass over every multi-boat block.
pub fn split_pass(
    structure: &CoalitionStructure,
    incumbent: &MpcSolution,
    ctx: &Negotiation<'_>,
    candidates: SplitCandidates,
    log: &mut DecisionLog,
) -> Result<PassOutcome> {
    let mut current = PassOutcome {
        structure: structure.clone(),
        solution: incumbent.clone(),
    };
    let targets: Vec<CoalitionId> = structure
        .blocks()
        .iter()
        .filter(|b| b.len() > 1)
        .map(|b| CoalitionId(b[0]))
        .collect();
    let margin = ctx.request.cfg.convergence_tol;
    for id in targets {
        ctx.check_deadline()?;
        let Some(index) = current.structure.index_of(id) else {
            continue;
        };
        let options = split_options(&current.structure, index, candidates)?;
        let merged_obj = current.solution.objective(id);
        let mut accepted = None;
        for batch in options.chunks(ctx.batch_size()) {
            let results: Vec<Evaluated> = batch
                .par_iter()
                .map(|cand| evaluate_split_candidate(&current, cand, merged_obj, margin, ctx))
                .collect::<Result<_>>()?;
            for ev in results {
                log.push(ev.record);
                if let Some(next) = ev.outcome {
                    accepted = Some(next);
                    break;
                }
            }
            if accepted.is_some() {
                break;
            }
        }
        if let Some(next) = accepted {
            current = next;
        }
    }
    Ok(current)
}

fn split_options(
    s: &CoalitionStructure,
    index: usize,
    which: SplitCandidates,
) -> Result<Vec<Candidate>> {
    let tree = &s.ledger()[index];
    let mut out: Vec<Candidate> = Vec::new();
    if let Some((left, right)) = tree.children() {
        out.push(Candidate {
            structure: s.split_into(index, vec![left.clone(), right.clone()])?,
            side_a: left.leaves(),
            side_b: right.leaves(),
        });
    }
    if which == SplitCandidates::LedgerAndSingles {
        for &boat in &s.blocks()[index] {
            let Some(rest) = tree.without(boat) else {
                continue;
            };
            let structure = s.split_into(index, vec![MergeTree::Leaf(boat), rest.clone()])?;
            if out.iter().any(|c| c.structure.same_partition(&structure)) {
                continue;
            }
            out.push(Candidate {
                structure,
                side_a: vec![boat],
                side_b: rest.leaves(),
            });
        }
    }
    Ok(out)
}

fn evaluate_split_candidate(
    current: &PassOutcome,
    cand: &Candidate,
    merged_obj: f64,
    margin: f64,
    ctx: &Negotiation<'_>,
) -> Result<Evaluated> {
    let share_a = side_total(&current.solution, &cand.side_a);
    let share_b = side_total(&current.solution, &cand.side_b);
    let mut record = DecisionRecord {
        day: ctx.day,
        epoch: current.structure.epoch,
        pass: PassKind::Split,
        incumbent: current.structure.to_string(),
        candidate: cand.structure.to_string(),
        merged_objective: Some(merged_obj),
        part_a: None,
        part_b: None,
        share_a: Some(share_a),
        share_b: Some(share_b),
        margin: None,
        accepted: false,
        note: String::new(),
    };
    let sol = match ctx.solve(&cand.structure, &current.solution) {
        Ok(sol) => sol,
        Err(e @ Error::Timeout) => return Err(e),
        Err(e) => {
            log::warn!("split candidate {} rejected: {e}", record.candidate);
            record.note = format!("solver failure: {e}");
            return Ok(Evaluated {
                record,
                outcome: None,
            });
        }
    };
    let obj_a = sol.objective(CoalitionId(cand.side_a[0]));
    let obj_b = sol.objective(CoalitionId(cand.side_b[0]));
    let ok = evaluate_split(ctx.mode, merged_obj, obj_a, obj_b, Some((share_a, share_b)), margin)?;
    record.part_a = Some(obj_a);
    record.part_b = Some(obj_b);
    record.margin = Some(merged_obj - (obj_a + obj_b));
    record.accepted = ok;
    Ok(Evaluated {
        record,
        outcome: ok.then_some(PassOutcome {
            structure: cand.structure.clone(),
            solution: sol,
        }),
    })
}
