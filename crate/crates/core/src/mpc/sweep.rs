//! Equilibrium search over all coalitions of a structure.

use crate::coalition::CoalitionStructure;
use crate::error::{check_len, Result};
use crate::model::{EffortSchedule, ModelParams, StockState};

use super::solver::{evaluate_schedule, solve_coalition_with, Proximal};
use super::{CommMode, MpcConfig, MpcSolution};

/// Inputs shared by every structure solve.
#[derive(Debug, Clone, Copy)]
pub struct StructureRequest<'a> {
    pub state: &'a StockState,
    pub params: &'a ModelParams,
    pub cfg: &'a MpcConfig,
    pub comm: CommMode,
    /// Previous joint plan; uniform efforts when absent.
    pub warm_start: Option<&'a EffortSchedule>,
    /// Sustainability anchor; the band is inactive when absent.
    pub anchor: Option<&'a [f64]>,
}

/// Solves every coalition of `structure` and returns the joint plan.
///
/// With [`CommMode::Cross`] the coalitions best-respond in canonical order to the
/// latest broadcast plans until no objective moves by more than `convergence_tol`
/// or `max_outer_iterations` sweeps have run (a single coalition runs one sweep).
/// With [`CommMode::None`] each coalition plans once as if nobody else fished.
pub fn solve_structure(structure: &CoalitionStructure, req: &StructureRequest<'_>) -> Result<MpcSolution> {
    solve_structure_with(structure, req, None)
}

pub fn solve_structure_with(
    structure: &CoalitionStructure,
    req: &StructureRequest<'_>,
    prox: Option<&Proximal>,
) -> Result<MpcSolution> {
    let params = req.params;
    let cfg = req.cfg;
    cfg.validate()?;
    structure.validate(params.n_boats())?;
    let k_boats = params.n_boats();
    let n = params.n_regions();
    let mut joint = match req.warm_start {
        Some(w) => {
            check_len("warm start boats", k_boats, w.n_boats())?;
            check_len("warm start regions", n, w.n_regions())?;
            w.resized(cfg.horizon)
        }
        None => EffortSchedule::uniform(k_boats, n, cfg.horizon),
    };
    let ids: Vec<_> = structure.ids().collect();
    let mut anchor = req.anchor.map(<[f64]>::to_vec);
    let mut converged = true;
    let mut band_violation: f64 = 0.0;
    let mut sweeps = 0;

    match req.comm {
        CommMode::Cross => {
            let max = if ids.len() == 1 {
                1
            } else {
                cfg.max_outer_iterations
            };
            let mut previous = vec![f64::NAN; ids.len()];
            let mut settled = false;
            for _ in 0..max {
                sweeps += 1;
                let mut moved = false;
                for (slot, &id) in ids.iter().enumerate() {
                    let sol = solve_coalition_with(
                        structure,
                        id,
                        &joint,
                        req.state,
                        params,
                        cfg,
                        &joint,
                        anchor.as_deref(),
                        prox,
                    )
                    .map_err(|e| e.in_coalition(id))?;
                    let obj = sol.objective(id);
                    if !previous[slot].is_finite() || (obj - previous[slot]).abs() > cfg.convergence_tol {
                        moved = true;
                    }
                    previous[slot] = obj;
                    converged &= sol.converged;
                    band_violation = band_violation.max(sol.band_violation);
                    if anchor.is_some() {
                        anchor = Some(sol.equilibrium_stock.clone());
                    }
                    joint = sol.schedule;
                }
                if !moved || ids.len() == 1 {
                    settled = true;
                    break;
                }
            }
            converged &= settled;
        }
        CommMode::None => {
            sweeps = 1;
            let idle = EffortSchedule::zeros(k_boats, n, cfg.horizon);
            let warm = joint.clone();
            for &id in &ids {
                let members = structure.block(id).expect("id comes from the structure");
                // the coalition believes nobody else fishes, so its band is anchored
                // on its own previous plan seen the same way
                let own_anchor = match req.anchor {
                    Some(_) => Some(
                        evaluate_schedule(structure, alone(&warm, members), req.state, params)?
                            .equilibrium_stock,
                    ),
                    None => None,
                };
                let sol = solve_coalition_with(
                    structure,
                    id,
                    &idle,
                    req.state,
                    params,
                    cfg,
                    &warm,
                    own_anchor.as_deref(),
                    prox,
                )
                .map_err(|e| e.in_coalition(id))?;
                converged &= sol.converged;
                band_violation = band_violation.max(sol.band_violation);
                for t in 0..cfg.horizon {
                    for &k in members {
                        let row = sol.schedule.step(t).row(k).to_vec();
                        joint.step_mut(t).row_mut(k).copy_from_slice(&row);
                    }
                }
            }
        }
    }

    let mut out = evaluate_schedule(structure, joint, req.state, params)?;
    out.converged = converged;
    out.band_violation = band_violation;
    out.iterations = sweeps;
    Ok(out)
}

/// `schedule` with every boat outside `members` idle.
fn alone(schedule: &EffortSchedule, members: &[usize]) -> EffortSchedule {
    let mut out = EffortSchedule::zeros(schedule.n_boats(), schedule.n_regions(), schedule.horizon());
    for t in 0..schedule.horizon() {
        for &k in members {
            out.step_mut(t).row_mut(k).copy_from_slice(schedule.step(t).row(k));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalition::CoalitionId;
    use crate::mpc::SustainabilityBand;

    fn cfg(horizon: usize) -> MpcConfig {
        MpcConfig {
            horizon,
            sustainability_radius: SustainabilityBand::Off,
            ..MpcConfig::default()
        }
    }

    fn request<'a>(
        state: &'a StockState,
        params: &'a ModelParams,
        cfg: &'a MpcConfig,
        comm: CommMode,
    ) -> StructureRequest<'a> {
        StructureRequest {
            state,
            params,
            cfg,
            comm,
            warm_start: None,
            anchor: None,
        }
    }

    #[test]
    fn grand_coalition_runs_one_sweep() {
        let p = ModelParams::reference();
        let c = cfg(5);
        let s = p.initial_state();
        let sol = solve_structure(&CoalitionStructure::grand(6), &request(&s, &p, &c, CommMode::Cross)).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.converged);
    }

    #[test]
    fn symmetric_boats_get_equal_objectives() {
        let p = ModelParams::new(vec![100.0, 100.0], vec![0.5, 0.5], vec![0.2, 0.2], vec![80.0, 80.0]).unwrap();
        let c = cfg(4);
        let s = p.initial_state();
        let structure = CoalitionStructure::singletons(2, 3);
        for comm in [CommMode::Cross, CommMode::None] {
            let sol = solve_structure(&structure, &request(&s, &p, &c, comm)).unwrap();
            let a = sol.objective(CoalitionId(0));
            let b = sol.objective(CoalitionId(1));
            assert!((a - b).abs() <= 1e-6 * a.max(1.0), "{comm:?}: {a} vs {b}");
        }
    }

    #[test]
    fn isolated_mode_ignores_other_plans() {
        // with no communication both boats pick the same richest region
        let p = ModelParams::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![0.3, 0.3], vec![100.0, 90.0]).unwrap();
        let c = cfg(1);
        let s = p.initial_state();
        let structure = CoalitionStructure::singletons(2, 3);
        let none = solve_structure(&structure, &request(&s, &p, &c, CommMode::None)).unwrap();
        assert!((none.schedule.get(0, 0, 0) - 1.0).abs() < 1e-9);
        assert!((none.schedule.get(1, 0, 0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn solutions_are_feasible_and_deterministic() {
        let p = ModelParams::reference();
        let c = cfg(6);
        let s = p.initial_state();
        let structure = CoalitionStructure::new(vec![vec![0, 1], vec![2, 3, 4], vec![5]], 3).unwrap();
        let a = solve_structure(&structure, &request(&s, &p, &c, CommMode::Cross)).unwrap();
        let b = solve_structure(&structure, &request(&s, &p, &c, CommMode::Cross)).unwrap();
        assert_eq!(a, b);
        assert!(a.schedule.simplex_violation() < 1e-8);
        assert!(a.schedule.coalition_violation(structure.block_slices()) < 1e-8);
    }
}
