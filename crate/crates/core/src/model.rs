//! Linear fish-stock dynamics and catch accounting.
//!
//! Each region `i` evolves as
//! `x_i(t+1) = A_i + B_i x_i(t) - sum_k gamma_k e_{k,i}(t) x_i(t)`,
//! clamped at zero, and boat `k` lands `sum_i gamma_k e_{k,i}(t) x_i(t)` fish per step.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Tolerance used when checking that effort rows lie on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", deny_unknown_fields)]
pub struct ModelParams {
    inflow: Vec<f64>,
    survival: Vec<f64>,
    catchability: Vec<f64>,
    initial_stock: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    inflow: Vec<f64>,
    survival: Vec<f64>,
    catchability: Vec<f64>,
    initial_stock: Vec<f64>,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.inflow, raw.survival, raw.catchability, raw.initial_stock)
    }
}

impl ModelParams {
    pub fn new(
        inflow: Vec<f64>,
        survival: Vec<f64>,
        catchability: Vec<f64>,
        initial_stock: Vec<f64>,
    ) -> Result<Self> {
        let n = inflow.len();
        if n == 0 {
            return Err(Error::validation("at least one region is required"));
        }
        if catchability.is_empty() {
            return Err(Error::validation("at least one boat is required"));
        }
        check_len("survival", n, survival.len())?;
        check_len("initial_stock", n, initial_stock.len())?;
        for (i, &a) in inflow.iter().enumerate() {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::validation(format!("inflow[{i}] = {a} must be >= 0")));
            }
        }
        for (i, &b) in survival.iter().enumerate() {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::validation(format!("survival[{i}] = {b} must lie in [0, 1]")));
            }
        }
        for (k, &g) in catchability.iter().enumerate() {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::validation(format!(
                    "catchability[{k}] = {g} must lie in (0, 1]"
                )));
            }
        }
        for (i, &x) in initial_stock.iter().enumerate() {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::validation(format!(
                    "initial_stock[{i}] = {x} must be >= 0"
                )));
            }
        }
        Ok(ModelParams {
            inflow,
            survival,
            catchability,
            initial_stock,
        })
    }

    /// Four regions and six boats; the reference instance used throughout the experiments.
    pub fn reference() -> Self {
        ModelParams::new(
            vec![300.0, 450.0, 350.0, 200.0],
            vec![0.2, 0.3, 0.45, 0.6],
            vec![0.08, 0.1, 0.12, 0.15, 0.20, 0.28],
            vec![200.0, 300.0, 150.0, 250.0],
        )
        .expect("reference parameters are valid")
    }

    /// Reference regions with `n_boats` boats cycling through the reference catchabilities.
    pub fn scaled_reference(n_boats: usize) -> Result<Self> {
        let base = Self::reference();
        let gammas = (0..n_boats)
            .map(|k| base.catchability[k % base.catchability.len()])
            .collect();
        ModelParams::new(base.inflow, base.survival, gammas, base.initial_stock)
    }

    pub fn n_regions(&self) -> usize {
        self.inflow.len()
    }

    pub fn n_boats(&self) -> usize {
        self.catchability.len()
    }

    pub fn inflow(&self) -> &[f64] {
        &self.inflow
    }

    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    pub fn catchability(&self) -> &[f64] {
        &self.catchability
    }

    pub fn initial_stock(&self) -> &[f64] {
        &self.initial_stock
    }

    pub fn initial_state(&self) -> StockState {
        StockState::new(self.initial_stock.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockState {
    pub stock: Vec<f64>,
    pub day: usize,
    /// Regions whose stock was clamped at zero on the step that produced this state.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clamped: Vec<usize>,
}

impl StockState {
    pub fn new(stock: Vec<f64>) -> Self {
        StockState {
            stock,
            day: 0,
            clamped: Vec::new(),
        }
    }

    pub fn was_clamped(&self) -> bool {
        !self.clamped.is_empty()
    }
}

/// Efforts of every boat in every region for a single step, stored row-major by boat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortMatrix {
    n_boats: usize,
    n_regions: usize,
    data: Vec<f64>,
}

impl EffortMatrix {
    pub fn zeros(n_boats: usize, n_regions: usize) -> Self {
        EffortMatrix {
            n_boats,
            n_regions,
            data: vec![0.0; n_boats * n_regions],
        }
    }

    pub fn uniform(n_boats: usize, n_regions: usize) -> Self {
        EffortMatrix {
            n_boats,
            n_regions,
            data: vec![1.0 / n_regions as f64; n_boats * n_regions],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_boats = rows.len();
        let n_regions = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_boats * n_regions);
        for row in rows {
            check_len("effort row", n_regions, row.len())?;
            data.extend(row);
        }
        Ok(EffortMatrix {
            n_boats,
            n_regions,
            data,
        })
    }

    pub fn n_boats(&self) -> usize {
        self.n_boats
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn row(&self, boat: usize) -> &[f64] {
        &self.data[boat * self.n_regions..(boat + 1) * self.n_regions]
    }

    pub fn row_mut(&mut self, boat: usize) -> &mut [f64] {
        &mut self.data[boat * self.n_regions..(boat + 1) * self.n_regions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_regions.max(1)).take(self.n_boats)
    }

    /// Largest deviation from `{e >= 0, sum e = 1}` over all rows.
    pub fn simplex_violation(&self) -> f64 {
        self.rows()
            .map(|row| {
                let neg = row.iter().fold(0.0_f64, |m, &v| m.max(-v));
                let sum = (row.iter().sum::<f64>() - 1.0).abs();
                neg.max(sum)
            })
            .fold(0.0, f64::max)
    }

    fn check_dims(&self, params: &ModelParams) -> Result<()> {
        check_len("effort boats", params.n_boats(), self.n_boats)?;
        check_len("effort regions", params.n_regions(), self.n_regions)
    }

    /// Total removal rate `sum_k gamma_k e_{k,i}` per region.
    pub fn removal_rates(&self, catchability: &[f64]) -> Vec<f64> {
        let mut rates = vec![0.0; self.n_regions];
        for (row, &g) in self.rows().zip(catchability) {
            for (r, &e) in rates.iter_mut().zip(row) {
                *r += g * e;
            }
        }
        rates
    }
}

/// Effort plan over a prediction horizon: one [`EffortMatrix`] per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortSchedule {
    n_boats: usize,
    n_regions: usize,
    steps: Vec<EffortMatrix>,
}

impl EffortSchedule {
    pub fn uniform(n_boats: usize, n_regions: usize, horizon: usize) -> Self {
        EffortSchedule {
            n_boats,
            n_regions,
            steps: vec![EffortMatrix::uniform(n_boats, n_regions); horizon],
        }
    }

    pub fn zeros(n_boats: usize, n_regions: usize, horizon: usize) -> Self {
        EffortSchedule {
            n_boats,
            n_regions,
            steps: vec![EffortMatrix::zeros(n_boats, n_regions); horizon],
        }
    }

    pub fn from_steps(n_boats: usize, n_regions: usize, steps: Vec<EffortMatrix>) -> Result<Self> {
        for m in &steps {
            check_len("schedule boats", n_boats, m.n_boats)?;
            check_len("schedule regions", n_regions, m.n_regions)?;
        }
        Ok(EffortSchedule {
            n_boats,
            n_regions,
            steps,
        })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn n_boats(&self) -> usize {
        self.n_boats
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    pub fn step(&self, t: usize) -> &EffortMatrix {
        &self.steps[t]
    }

    pub fn step_mut(&mut self, t: usize) -> &mut EffortMatrix {
        &mut self.steps[t]
    }

    pub fn steps(&self) -> &[EffortMatrix] {
        &self.steps
    }

    /// `e[k][i][t]` accessor.
    pub fn get(&self, boat: usize, region: usize, t: usize) -> f64 {
        self.steps[t].row(boat)[region]
    }

    pub fn simplex_violation(&self) -> f64 {
        self.steps
            .iter()
            .map(EffortMatrix::simplex_violation)
            .fold(0.0, f64::max)
    }

    /// Largest difference between the plans of two boats that belong to the same block.
    pub fn coalition_violation<'a>(&self, blocks: impl IntoIterator<Item = &'a [usize]>) -> f64 {
        let mut worst = 0.0_f64;
        for block in blocks {
            let Some((&lead, rest)) = block.split_first() else {
                continue;
            };
            for m in &self.steps {
                let lead_row = m.row(lead);
                for &k in rest {
                    for (a, b) in lead_row.iter().zip(m.row(k)) {
                        worst = worst.max((a - b).abs());
                    }
                }
            }
        }
        worst
    }

    /// Drops the first step and repeats the last one, keeping the horizon length.
    pub fn shifted(&self) -> Self {
        let mut steps = self.steps.clone();
        if let Some(last) = steps.last().cloned() {
            steps.remove(0);
            steps.push(last);
        }
        EffortSchedule {
            n_boats: self.n_boats,
            n_regions: self.n_regions,
            steps,
        }
    }

    /// Same plan truncated or padded (with its last step, or uniform) to `horizon` steps.
    pub fn resized(&self, horizon: usize) -> Self {
        let mut steps: Vec<_> = self.steps.iter().take(horizon).cloned().collect();
        let filler = self
            .steps
            .last()
            .cloned()
            .unwrap_or_else(|| EffortMatrix::uniform(self.n_boats, self.n_regions));
        steps.resize(horizon, filler);
        EffortSchedule {
            n_boats: self.n_boats,
            n_regions: self.n_regions,
            steps,
        }
    }

    fn check_dims(&self, params: &ModelParams) -> Result<()> {
        check_len("schedule boats", params.n_boats(), self.n_boats)?;
        check_len("schedule regions", params.n_regions(), self.n_regions)
    }
}

/// Advances the real stock by one step under `effort_today`.
pub fn step_dynamics(
    state: &StockState,
    effort_today: &EffortMatrix,
    params: &ModelParams,
) -> Result<StockState> {
    effort_today.check_dims(params)?;
    check_len("stock", params.n_regions(), state.stock.len())?;
    let rates = effort_today.removal_rates(params.catchability());
    let mut clamped = Vec::new();
    let stock = (0..params.n_regions())
        .map(|i| {
            let x = state.stock[i];
            let next = params.inflow[i] + params.survival[i] * x - rates[i] * x;
            if next < 0.0 {
                clamped.push(i);
                0.0
            } else {
                next
            }
        })
        .collect();
    Ok(StockState {
        stock,
        day: state.day + 1,
        clamped,
    })
}

/// Fish landed by each boat on the current step.
pub fn catch_per_boat(
    state: &StockState,
    effort_today: &EffortMatrix,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    effort_today.check_dims(params)?;
    check_len("stock", params.n_regions(), state.stock.len())?;
    Ok(effort_today
        .rows()
        .zip(params.catchability())
        .map(|(row, &g)| {
            row.iter()
                .zip(&state.stock)
                .map(|(&e, &x)| g * e * x)
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonRollout {
    /// `T + 1` states starting with the input state.
    pub trajectory: Vec<StockState>,
    /// `catches[k][t]`.
    pub catches: Vec<Vec<f64>>,
}

impl HorizonRollout {
    pub fn any_clamped(&self) -> bool {
        self.trajectory.iter().any(StockState::was_clamped)
    }

    pub fn boat_totals(&self) -> Vec<f64> {
        self.catches.iter().map(|c| c.iter().sum()).collect()
    }
}

pub fn roll_horizon(
    state: &StockState,
    schedule: &EffortSchedule,
    params: &ModelParams,
) -> Result<HorizonRollout> {
    schedule.check_dims(params)?;
    let horizon = schedule.horizon();
    let mut trajectory = Vec::with_capacity(horizon + 1);
    let mut catches = vec![Vec::with_capacity(horizon); params.n_boats()];
    trajectory.push(state.clone());
    for m in schedule.steps() {
        let current = trajectory.last().expect("trajectory is never empty");
        for (k, c) in catch_per_boat(current, m, params)?.into_iter().enumerate() {
            catches[k].push(c);
        }
        let next = step_dynamics(current, m, params)?;
        trajectory.push(next);
    }
    Ok(HorizonRollout {
        trajectory,
        catches,
    })
}
