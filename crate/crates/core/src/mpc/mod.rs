//! Receding-horizon optimisation of coalition effort schedules.

mod simplex;
mod solver;
mod sweep;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coalition::CoalitionId;
use crate::error::{Error, Result};
use crate::model::EffortSchedule;

pub use simplex::project_to_simplex;
pub(crate) use simplex::project_in_place;
pub use solver::{solve_coalition, solve_coalition_with, Proximal};
pub use sweep::{solve_structure, solve_structure_with, StructureRequest};

/// Half-width of the band that predicted stocks must stay in around the anchor stock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SustainabilityBand {
    Off,
    /// Fraction of the anchor stock, per region.
    Relative(f64),
    /// Fixed number of fish, every region.
    Absolute(f64),
}

impl SustainabilityBand {
    pub fn radius(&self, anchor: f64) -> Option<f64> {
        match *self {
            SustainabilityBand::Off => None,
            SustainabilityBand::Relative(f) => Some(f * anchor.abs()),
            SustainabilityBand::Absolute(r) => Some(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon `T`, in steps.
    pub horizon: usize,
    pub sustainability_radius: SustainabilityBand,
    /// Cap on best-response sweeps over the coalitions.
    pub max_outer_iterations: usize,
    /// Objective change (fish) below which a sweep counts as converged.
    pub convergence_tol: f64,
    pub solver_max_steps: usize,
    /// Stationarity tolerance on the normalised projected gradient.
    pub solver_step_tol: f64,
    /// Allowed band violation as a fraction of the band radius.
    pub band_tol: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 30,
            sustainability_radius: SustainabilityBand::Relative(1.0),
            max_outer_iterations: 10,
            convergence_tol: 1e-2,
            solver_max_steps: 300,
            solver_step_tol: 1e-7,
            band_tol: 0.02,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::validation("horizon must be >= 1"));
        }
        if self.max_outer_iterations == 0 || self.solver_max_steps == 0 {
            return Err(Error::validation("iteration counts must be >= 1"));
        }
        for (name, v) in [
            ("convergence_tol", self.convergence_tol),
            ("solver_step_tol", self.solver_step_tol),
            ("band_tol", self.band_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} must be positive")));
            }
        }
        match self.sustainability_radius {
            SustainabilityBand::Relative(r) | SustainabilityBand::Absolute(r)
                if !(r >= 0.0 && r.is_finite()) =>
            {
                Err(Error::validation("sustainability radius must be >= 0"))
            }
            _ => Ok(()),
        }
    }
}

/// How coalitions learn about each other's plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommMode {
    /// Sequential best responses to the latest broadcast schedules.
    Cross,
    /// Each coalition plans as if nobody else fishes.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    /// Joint schedule for every boat.
    pub schedule: EffortSchedule,
    /// Predicted stocks, `horizon + 1` rows starting with the current stock.
    pub trajectory: Vec<Vec<f64>>,
    /// Mean predicted stock over steps `1..=T`.
    pub equilibrium_stock: Vec<f64>,
    /// Predicted catch of each coalition over the horizon under the joint schedule.
    pub objective_per_coalition: BTreeMap<CoalitionId, f64>,
    /// Predicted catch of each boat over the horizon.
    pub boat_objective: Vec<f64>,
    pub converged: bool,
    /// Largest band violation in fish (0 when the band is off).
    pub band_violation: f64,
    /// Solver steps for a single coalition, or outer sweeps for a structure.
    pub iterations: usize,
}

impl MpcSolution {
    pub fn total_objective(&self) -> f64 {
        self.boat_objective.iter().sum()
    }

    pub fn objective(&self, id: CoalitionId) -> f64 {
        self.objective_per_coalition.get(&id).copied().unwrap_or(0.0)
    }
}
