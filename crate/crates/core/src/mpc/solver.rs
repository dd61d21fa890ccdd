//! Projected-gradient ascent for a single coalition's horizon problem.
//!
//! The coalition shares one effort row per step (`u[t][i]`); everyone else's plan is
//! fixed. Predicted catch is differentiated through the stock recurrence with a
//! backward (adjoint) pass, and every iterate is projected row-by-row onto the simplex.

use std::collections::BTreeMap;

use crate::coalition::{CoalitionId, CoalitionStructure};
use crate::error::{check_len, Error, Result};
use crate::model::{roll_horizon, EffortSchedule, ModelParams, StockState};

use super::{project_in_place, MpcConfig, MpcSolution};

/// Penalty weights tried in turn until the sustainability band holds.
const BAND_WEIGHTS: [f64; 8] = [0.0, 1e-2, 1e-1, 1.0, 10.0, 1e2, 1e3, 1e4];
const ARMIJO: f64 = 1e-4;

/// Pulls each boat's first-step effort towards a target vector with weight `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct Proximal {
    pub mu: f64,
    /// One target per boat (length `N` each).
    pub targets: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Eval {
    /// Catch minus penalties.
    total: f64,
}

struct Problem<'a> {
    inflow: &'a [f64],
    survival: &'a [f64],
    x0: &'a [f64],
    n: usize,
    horizon: usize,
    gain: f64,
    /// Removal rate of non-members, `T * N`.
    other: Vec<f64>,
    band: Option<(Vec<f64>, Vec<f64>)>,
    weight: f64,
    prox_mu: f64,
    prox_targets: Vec<&'a [f64]>,
}

struct Scratch {
    x: Vec<f64>,
    clamped: Vec<bool>,
    adjoint: Vec<f64>,
    proj: Vec<f64>,
}

impl Problem<'_> {
    fn scratch(&self) -> Scratch {
        Scratch {
            x: vec![0.0; (self.horizon + 1) * self.n],
            clamped: vec![false; (self.horizon + 1) * self.n],
            adjoint: vec![0.0; self.n],
            proj: Vec::with_capacity(self.n),
        }
    }

    fn band_excess(&self, x: f64, i: usize) -> f64 {
        match &self.band {
            Some((lo, hi)) => {
                if x > hi[i] {
                    x - hi[i]
                } else if x < lo[i] {
                    x - lo[i]
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }

    fn rollout(&self, u: &[f64], s: &mut Scratch) -> Eval {
        let n = self.n;
        s.x[..n].copy_from_slice(self.x0);
        let mut catch = 0.0;
        let mut band = 0.0;
        for t in 0..self.horizon {
            for i in 0..n {
                let x = s.x[t * n + i];
                let e = u[t * n + i];
                catch += self.gain * e * x;
                let rate = self.gain * e + self.other[t * n + i];
                let next = self.inflow[i] + (self.survival[i] - rate) * x;
                let idx = (t + 1) * n + i;
                if next < 0.0 {
                    s.x[idx] = 0.0;
                    s.clamped[idx] = true;
                } else {
                    s.x[idx] = next;
                    s.clamped[idx] = false;
                }
                let d = self.band_excess(s.x[idx], i);
                band += d * d;
            }
        }
        let prox = if self.prox_mu > 0.0 {
            self.prox_targets
                .iter()
                .map(|v| {
                    u[..n]
                        .iter()
                        .zip(v.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .sum::<f64>()
                * self.prox_mu
        } else {
            0.0
        };
        Eval {
            total: catch - self.weight * band - prox,
        }
    }

    fn gradient(&self, u: &[f64], s: &mut Scratch, grad: &mut [f64]) -> Eval {
        let ev = self.rollout(u, s);
        let n = self.n;
        let horizon = self.horizon;
        for i in 0..n {
            let x = s.x[horizon * n + i];
            s.adjoint[i] = -self.weight * 2.0 * self.band_excess(x, i);
        }
        for t in (0..horizon).rev() {
            for i in 0..n {
                let idx = t * n + i;
                let next = if s.clamped[(t + 1) * n + i] {
                    0.0
                } else {
                    s.adjoint[i]
                };
                let x = s.x[idx];
                let e = u[idx];
                grad[idx] = self.gain * x * (1.0 - next);
                let rate = self.gain * e + self.other[idx];
                let mut adj = self.gain * e + next * (self.survival[i] - rate);
                if t >= 1 {
                    adj -= self.weight * 2.0 * self.band_excess(x, i);
                }
                s.adjoint[i] = adj;
            }
        }
        if self.prox_mu > 0.0 {
            for v in &self.prox_targets {
                for i in 0..n {
                    grad[i] -= 2.0 * self.prox_mu * (u[i] - v[i]);
                }
            }
        }
        ev
    }

    fn project(&self, u: &mut [f64], s: &mut Scratch) {
        for row in u.chunks_mut(self.n) {
            project_in_place(row, &mut s.proj);
        }
    }

    /// Largest band violation (fish) and its region, on steps `1..=T`.
    fn band_violation(&self, u: &[f64], s: &mut Scratch) -> (f64, usize) {
        if self.band.is_none() {
            return (0.0, 0);
        }
        self.rollout(u, s);
        let mut worst = (0.0, 0);
        for t in 1..=self.horizon {
            for i in 0..self.n {
                let d = self.band_excess(s.x[t * self.n + i], i).abs();
                if d > worst.0 {
                    worst = (d, i);
                }
            }
        }
        worst
    }

    /// Band violation relative to the tolerated slack in each region.
    fn band_satisfied(&self, u: &[f64], s: &mut Scratch, band_tol: f64) -> bool {
        let Some((lo, hi)) = &self.band else {
            return true;
        };
        self.rollout(u, s);
        (1..=self.horizon).all(|t| {
            (0..self.n).all(|i| {
                let slack = band_tol * 0.5 * (hi[i] - lo[i]) + 1e-9;
                self.band_excess(s.x[t * self.n + i], i).abs() <= slack
            })
        })
    }

    /// Projected gradient ascent with Armijo backtracking; returns (value, converged, steps).
    fn maximize(&self, u: &mut Vec<f64>, s: &mut Scratch, max_steps: usize, tol: f64) -> (Eval, bool, usize) {
        self.project(u, s);
        let len = u.len();
        let mut grad = vec![0.0; len];
        let mut cand = vec![0.0; len];
        let mut ev = self.gradient(u, s, &mut grad);
        let mut step = 0.0;
        for it in 0..max_steps {
            let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
            if gmax == 0.0 || !gmax.is_finite() {
                return (ev, gmax == 0.0, it);
            }
            for ((c, &x), &g) in cand.iter_mut().zip(u.iter()).zip(&grad) {
                *c = x + g / gmax;
            }
            self.project(&mut cand, s);
            let kkt = cand
                .iter()
                .zip(u.iter())
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            if kkt <= tol {
                return (ev, true, it);
            }
            if step == 0.0 {
                step = 0.1 / gmax;
            }
            let accepted = loop {
                for ((c, &x), &g) in cand.iter_mut().zip(u.iter()).zip(&grad) {
                    *c = x + step * g;
                }
                self.project(&mut cand, s);
                let predicted: f64 = cand
                    .iter()
                    .zip(u.iter())
                    .zip(&grad)
                    .map(|((c, x), g)| g * (c - x))
                    .sum();
                let trial = self.rollout(&cand, s);
                if trial.total >= ev.total + ARMIJO * predicted {
                    break Some(trial);
                }
                step *= 0.5;
                if step * gmax < 1e-13 {
                    break None;
                }
            };
            let Some(trial) = accepted else {
                return (ev, true, it);
            };
            let gain = trial.total - ev.total;
            std::mem::swap(u, &mut cand);
            ev = self.gradient(u, s, &mut grad);
            step *= 2.0;
            if gain <= 1e-13 * ev.total.abs().max(1.0) {
                return (ev, true, it + 1);
            }
        }
        (ev, false, max_steps)
    }
}

/// Best response of coalition `target` to the fixed plans of everyone else.
#[allow(clippy::too_many_arguments)]
pub fn solve_coalition(
    structure: &CoalitionStructure,
    target: CoalitionId,
    fixed_efforts: &EffortSchedule,
    state: &StockState,
    params: &ModelParams,
    cfg: &MpcConfig,
    warm_start: &EffortSchedule,
    anchor: Option<&[f64]>,
) -> Result<MpcSolution> {
    solve_coalition_with(
        structure,
        target,
        fixed_efforts,
        state,
        params,
        cfg,
        warm_start,
        anchor,
        None,
    )
}

/// [`solve_coalition`] with an optional proximal pull of first-step efforts.
#[allow(clippy::too_many_arguments)]
pub fn solve_coalition_with(
    structure: &CoalitionStructure,
    target: CoalitionId,
    fixed_efforts: &EffortSchedule,
    state: &StockState,
    params: &ModelParams,
    cfg: &MpcConfig,
    warm_start: &EffortSchedule,
    anchor: Option<&[f64]>,
    prox: Option<&Proximal>,
) -> Result<MpcSolution> {
    cfg.validate()?;
    let n = params.n_regions();
    let k_boats = params.n_boats();
    check_len("structure boats", k_boats, structure.n_boats())?;
    check_len("fixed efforts boats", k_boats, fixed_efforts.n_boats())?;
    check_len("fixed efforts regions", n, fixed_efforts.n_regions())?;
    check_len("warm start boats", k_boats, warm_start.n_boats())?;
    check_len("warm start regions", n, warm_start.n_regions())?;
    check_len("stock", n, state.stock.len())?;
    let members = structure
        .block(target)
        .ok_or_else(|| Error::validation(format!("unknown coalition {target}")))?
        .to_vec();
    let horizon = cfg.horizon;
    let fixed = fixed_efforts.resized(horizon);
    let warm = warm_start.resized(horizon);
    let gammas = params.catchability();
    let mut is_member = vec![false; k_boats];
    for &k in &members {
        is_member[k] = true;
    }
    let gain: f64 = members.iter().map(|&k| gammas[k]).sum();

    let mut other = vec![0.0; horizon * n];
    let mut u = vec![0.0; horizon * n];
    for t in 0..horizon {
        let m = fixed.step(t);
        let w = warm.step(t);
        for k in 0..k_boats {
            if is_member[k] {
                for (dst, &e) in u[t * n..(t + 1) * n].iter_mut().zip(w.row(k)) {
                    *dst += e / members.len() as f64;
                }
            } else {
                for (dst, &e) in other[t * n..(t + 1) * n].iter_mut().zip(m.row(k)) {
                    *dst += gammas[k] * e;
                }
            }
        }
    }

    let band = match anchor {
        Some(a) => {
            check_len("band anchor", n, a.len())?;
            cfg.sustainability_radius.radius(1.0).map(|_| {
                let radius: Vec<f64> = a
                    .iter()
                    .map(|&x| cfg.sustainability_radius.radius(x).unwrap_or(0.0))
                    .collect();
                let lo = a.iter().zip(&radius).map(|(x, r)| x - r).collect();
                let hi = a.iter().zip(&radius).map(|(x, r)| x + r).collect();
                (lo, hi)
            })
        }
        None => None,
    };

    let prox_targets: Vec<&[f64]> = match prox {
        Some(p) => {
            check_len("proximal targets", k_boats, p.targets.len())?;
            for v in &p.targets {
                check_len("proximal target", n, v.len())?;
            }
            members.iter().map(|&k| p.targets[k].as_slice()).collect()
        }
        None => Vec::new(),
    };

    let mut problem = Problem {
        inflow: params.inflow(),
        survival: params.survival(),
        x0: &state.stock,
        n,
        horizon,
        gain,
        other,
        band,
        weight: 0.0,
        prox_mu: prox.map_or(0.0, |p| p.mu),
        prox_targets,
    };
    let mut scratch = problem.scratch();
    let mut warm_u = u.clone();
    problem.project(&mut warm_u, &mut scratch);

    let weights: &[f64] = if problem.band.is_some() {
        &BAND_WEIGHTS
    } else {
        &BAND_WEIGHTS[..1]
    };
    let mut converged = false;
    let mut steps = 0;
    let mut satisfied = false;
    for &w in weights {
        problem.weight = w;
        let (_, conv, used) = problem.maximize(&mut u, &mut scratch, cfg.solver_max_steps, cfg.solver_step_tol);
        converged = conv;
        steps += used;
        if problem.band_satisfied(&u, &mut scratch, cfg.band_tol) {
            satisfied = true;
            break;
        }
    }
    if !satisfied {
        let (violation, region) = problem.band_violation(&u, &mut scratch);
        return Err(Error::BandInfeasible {
            coalition: target,
            region,
            violation,
        });
    }
    // never return something worse than the starting point
    let final_value = problem.rollout(&u, &mut scratch).total;
    let warm_value = problem.rollout(&warm_u, &mut scratch).total;
    if warm_value > final_value && problem.band_satisfied(&warm_u, &mut scratch, cfg.band_tol) {
        u = warm_u;
    }
    let (band_violation, _) = problem.band_violation(&u, &mut scratch);

    let mut schedule = fixed;
    for t in 0..horizon {
        let row = &u[t * n..(t + 1) * n];
        let m = schedule.step_mut(t);
        for &k in &members {
            m.row_mut(k).copy_from_slice(row);
        }
    }
    let mut sol = evaluate_schedule(structure, schedule, state, params)?;
    sol.converged = converged;
    sol.band_violation = band_violation;
    sol.iterations = steps;
    Ok(sol)
}

/// Rolls a joint schedule forward and fills in the predicted objectives.
pub(crate) fn evaluate_schedule(
    structure: &CoalitionStructure,
    schedule: EffortSchedule,
    state: &StockState,
    params: &ModelParams,
) -> Result<MpcSolution> {
    let rollout = roll_horizon(state, &schedule, params)?;
    let boat_objective = rollout.boat_totals();
    let objective_per_coalition: BTreeMap<CoalitionId, f64> = structure
        .blocks()
        .iter()
        .map(|b| (CoalitionId(b[0]), b.iter().map(|&k| boat_objective[k]).sum()))
        .collect();
    let trajectory: Vec<Vec<f64>> = rollout.trajectory.into_iter().map(|s| s.stock).collect();
    let n = params.n_regions();
    let steps = trajectory.len().saturating_sub(1);
    let equilibrium_stock = if steps == 0 {
        trajectory[0].clone()
    } else {
        (0..n)
            .map(|i| trajectory[1..].iter().map(|x| x[i]).sum::<f64>() / steps as f64)
            .collect()
    };
    Ok(MpcSolution {
        schedule,
        trajectory,
        equilibrium_stock,
        objective_per_coalition,
        boat_objective,
        converged: true,
        band_violation: 0.0,
        iterations: 0,
    })
}
