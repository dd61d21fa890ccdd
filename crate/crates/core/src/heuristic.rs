//! Accelerated coalition control by clustering virtual effort vectors.
//!
//! Each epoch alternates three steps: the virtual vectors are moved to the
//! stationary point of the fusion penalty given the real efforts, blocks whose
//! vectors lie close together are merged, and the real efforts are re-solved
//! with a proximal pull towards the virtual vectors.

use serde::{Deserialize, Serialize};

use crate::coalition::{
    share_ratio, split_pass, CoalitionStructure, DecisionLog, DecisionRecord, Negotiation,
    PassKind, SplitCandidates,
};
use crate::error::{check_len, Error, Result};
use crate::model::EffortMatrix;
use crate::mpc::{solve_structure_with, MpcSolution, Proximal, StructureRequest};

/// Vectors closer than this (max-norm) belong to the same equality class.
const CLASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeuristicConfig {
    /// Weight `mu` pulling real efforts and virtual vectors together.
    pub mu: f64,
    /// Fusion weight between virtual vectors; below 1 the epoch also tries splits.
    pub gamma_tradeoff: f64,
    /// Squared distance below which two blocks merge.
    pub merge_threshold: f64,
    pub max_iterations: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            mu: 0.001,
            gamma_tradeoff: 1.0,
            merge_threshold: 1e-2,
            max_iterations: 10,
        }
    }
}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::validation("mu must be positive"));
        }
        if !(self.gamma_tradeoff > 0.0 && self.gamma_tradeoff.is_finite()) {
            return Err(Error::validation("gamma_tradeoff must be positive"));
        }
        if !(self.merge_threshold >= 0.0 && self.merge_threshold.is_finite()) {
            return Err(Error::validation("merge_threshold must be >= 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("max_iterations must be >= 1"));
        }
        Ok(())
    }
}

/// One virtual effort vector per boat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualEfforts {
    vectors: Vec<Vec<f64>>,
}

impl VirtualEfforts {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let n = vectors.first().map_or(0, Vec::len);
        if vectors.is_empty() || n == 0 {
            return Err(Error::validation("virtual efforts need at least one boat and region"));
        }
        for v in &vectors {
            check_len("virtual effort", n, v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation("virtual efforts must be finite"));
            }
        }
        Ok(Self { vectors })
    }

    /// Starts from the real efforts.
    pub fn from_efforts(e: &EffortMatrix) -> Self {
        Self {
            vectors: e.rows().map(<[f64]>::to_vec).collect(),
        }
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn get(&self, boat: usize) -> &[f64] {
        &self.vectors[boat]
    }

    pub fn n_boats(&self) -> usize {
        self.vectors.len()
    }

    /// Boats grouped by identical vectors, in order of their smallest member.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for k in 0..self.vectors.len() {
            match classes
                .iter_mut()
                .find(|c| max_abs_diff(&self.vectors[c[0]], &self.vectors[k]) <= CLASS_TOL)
            {
                Some(c) => c.push(k),
                None => classes.push(vec![k]),
            }
        }
        classes
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Moves every virtual vector to the stationary point of
/// `mu * |e_k - v_k|^2 + gamma/2 * sum |v_k - v_l|^2` given the real efforts.
///
/// The neighbours of `v_k` are all vectors different from it. Boats sharing a
/// vector keep sharing it and use their mean effort `e_c`. With the classes fixed,
/// the first-order conditions `(mu + gamma |V_k|) v_k - gamma sum_{V_k} v_l = mu e_k`
/// sum to `sum_k v_k = sum_k e_k`, which gives
/// `v_c = (mu e_c + gamma sum_k e_k) / (mu + gamma K)`.
pub fn update_virtual(
    e: &EffortMatrix,
    v: &VirtualEfforts,
    cfg: &HeuristicConfig,
) -> Result<VirtualEfforts> {
    cfg.validate()?;
    check_len("virtual efforts", e.n_boats(), v.n_boats())?;
    check_len("virtual effort regions", e.n_regions(), v.vectors[0].len())?;
    let (mu, gamma) = (cfg.mu, cfg.gamma_tradeoff);
    let n = e.n_regions();
    let k_boats = e.n_boats();
    let mut total = vec![0.0; n];
    for row in e.rows() {
        for (t, x) in total.iter_mut().zip(row) {
            *t += x;
        }
    }
    let classes = v.classes();
    let denom = mu + gamma * k_boats as f64;
    let mut out = v.clone();
    for class in classes {
        let mean = mean_rows(e, &class);
        let next: Vec<f64> = mean
            .iter()
            .zip(&total)
            .map(|(m, t)| (mu * m + gamma * t) / denom)
            .collect();
        for &k in &class {
            out.vectors[k].clone_from(&next);
        }
    }
    Ok(out)
}

fn mean_rows(e: &EffortMatrix, boats: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; e.n_regions()];
    for &k in boats {
        for (x, y) in out.iter_mut().zip(e.row(k)) {
            *x += y;
        }
    }
    out.iter_mut().for_each(|x| *x /= boats.len() as f64);
    out
}

/// Result of one agglomerative pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub structure: CoalitionStructure,
    /// Virtual vectors with merged blocks set to their boat-weighted mean.
    pub virtual_efforts: VirtualEfforts,
    /// Number of pairwise distances computed.
    pub distance_evaluations: usize,
}

/// Merges block pairs whose mean virtual vectors are closer than `threshold`
/// in squared distance, scanning pairs in canonical order.
///
/// `boat_objective` sets the recorded share ratios of each merge.
pub fn cluster_by_distance(
    v: &VirtualEfforts,
    threshold: f64,
    current: &CoalitionStructure,
    boat_objective: &[f64],
) -> Result<Clustering> {
    check_len("virtual efforts", current.n_boats(), v.n_boats())?;
    check_len("boat objectives", current.n_boats(), boat_objective.len())?;
    let mut structure = current.clone();
    let mut reps: Vec<Vec<f64>> = structure.blocks().iter().map(|b| mean_of(v, b)).collect();
    let mut evaluations = 0;
    let mut i = 0;
    while i < structure.len() {
        let mut j = i + 1;
        while j < structure.len() {
            evaluations += 1;
            if squared_distance(&reps[i], &reps[j]) < threshold && structure.can_merge(i, j) {
                let obj = |b: &[usize]| b.iter().map(|&k| boat_objective[k]).sum::<f64>();
                let ratio = share_ratio(obj(&structure.blocks()[i]), obj(&structure.blocks()[j]));
                structure = structure.merged(i, j, ratio)?;
                reps[i] = mean_of(v, &structure.blocks()[i]);
                reps.remove(j);
            } else {
                j += 1;
            }
        }
        i += 1;
    }
    let mut vectors = v.vectors.clone();
    for (block, rep) in structure.blocks().iter().zip(&reps) {
        for &k in block {
            vectors[k].clone_from(rep);
        }
    }
    Ok(Clustering {
        structure,
        virtual_efforts: VirtualEfforts { vectors },
        distance_evaluations: evaluations,
    })
}

fn mean_of(v: &VirtualEfforts, block: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; v.vectors[0].len()];
    for &k in block {
        for (x, y) in out.iter_mut().zip(&v.vectors[k]) {
            *x += y;
        }
    }
    out.iter_mut().for_each(|x| *x /= block.len() as f64);
    out
}

/// Solves the structure with first-step efforts pulled towards `v` by weight `mu`.
pub fn solve_penalized(
    v: &VirtualEfforts,
    structure: &CoalitionStructure,
    req: &StructureRequest<'_>,
    mu: f64,
) -> Result<MpcSolution> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::validation("mu must be >= 0"));
    }
    check_len("virtual efforts", req.params.n_boats(), v.n_boats())?;
    if mu == 0.0 {
        return solve_structure_with(structure, req, None);
    }
    let prox = Proximal {
        mu,
        targets: v.vectors.clone(),
    };
    solve_structure_with(structure, req, Some(&prox))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicOutcome {
    pub structure: CoalitionStructure,
    pub solution: MpcSolution,
    /// Predicted catch after each accepted iteration, starting with the incumbent.
    pub objective_trace: Vec<f64>,
    pub distance_evaluations: usize,
    pub iterations: usize,
}

/// One decision epoch of the accelerated controller.
///
/// Iterates virtual update, clustering and penalized solve while the predicted
/// catch does not decrease (within `convergence_tol`) and the structure keeps
/// changing, for at most `max_iterations` rounds.
pub fn run_heuristic_epoch(
    structure: &CoalitionStructure,
    incumbent: &MpcSolution,
    ctx: &Negotiation<'_>,
    cfg: &HeuristicConfig,
    log: &mut DecisionLog,
) -> Result<HeuristicOutcome> {
    cfg.validate()?;
    let tol = ctx.request.cfg.convergence_tol;
    let mut current = structure.clone();
    let mut solution = incumbent.clone();
    let mut objective = solution.total_objective();
    let mut trace = vec![objective];
    let mut evaluations = 0;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        ctx.check_deadline()?;
        iterations += 1;
        let e = solution.schedule.step(0);
        let v = update_virtual(e, &VirtualEfforts::from_efforts(e), cfg)?;
        let clustering = cluster_by_distance(&v, cfg.merge_threshold, &current, &solution.boat_objective)?;
        evaluations += clustering.distance_evaluations;
        if clustering.structure.same_partition(&current) {
            break;
        }
        let req = StructureRequest {
            warm_start: Some(&solution.schedule),
            ..ctx.request
        };
        let mut record = DecisionRecord {
            day: ctx.day,
            epoch: current.epoch,
            pass: PassKind::Cluster,
            incumbent: current.to_string(),
            candidate: clustering.structure.to_string(),
            merged_objective: None,
            part_a: Some(objective),
            part_b: None,
            share_a: None,
            share_b: None,
            margin: None,
            accepted: false,
            note: format!("iteration {iterations}"),
        };
        let next = match solve_penalized(&clustering.virtual_efforts, &clustering.structure, &req, cfg.mu) {
            Ok(sol) => sol,
            Err(e @ Error::Timeout) => return Err(e),
            Err(e) => {
                log::warn!("clustered structure {} rejected: {e}", record.candidate);
                record.note = format!("iteration {iterations}: solver failure: {e}");
                log.push(record);
                break;
            }
        };
        let next_obj = next.total_objective();
        record.merged_objective = Some(next_obj);
        record.margin = Some(next_obj - objective);
        record.accepted = next_obj >= objective - tol;
        let accepted = record.accepted;
        log.push(record);
        if !accepted {
            break;
        }
        current = clustering.structure;
        solution = next;
        objective = next_obj;
        trace.push(objective);
    }
    if cfg.gamma_tradeoff < 1.0 {
        let out = split_pass(&current, &solution, ctx, SplitCandidates::LedgerOnly, log)?;
        if !out.structure.same_partition(&current) {
            trace.push(out.solution.total_objective());
        }
        current = out.structure;
        solution = out.solution;
    }
    Ok(HeuristicOutcome {
        structure: current,
        solution,
        objective_trace: trace,
        distance_evaluations: evaluations,
        iterations,
    })
}
