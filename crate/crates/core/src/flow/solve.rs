use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::network::{Flow, FlowNetwork};
use crate::flow::residual::Residual;

/// Which exact convex-cost flow algorithm to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InnerSolver {
    Ssp,
    CapacityScaling,
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub deadline: Option<Instant>,
    /// Record the minimum residual reduced cost after every augmentation.
    pub check_potentials: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SolveStats {
    pub augmentations: u64,
    pub shortest_path_runs: u64,
    pub scaling_phases: u32,
    /// Per-unit cost of each augmenting path (SSP only).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub path_costs: Vec<f64>,
    /// Minimum residual reduced cost seen after any augmentation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_reduced_cost: Option<f64>,
    pub elapsed: Duration,
}

impl SolveStats {
    fn observe(&mut self, residual: &Residual<'_>, delta: u64) {
        let m = residual.min_reduced_cost(delta);
        self.min_reduced_cost = Some(self.min_reduced_cost.map_or(m, |x| x.min(m)));
    }
}

fn finish(network: &FlowNetwork, residual: Residual<'_>, mut stats: SolveStats, start: Instant) -> Result<(Flow, f64, SolveStats)> {
    let flow = Flow { values: residual.flow };
    let cost = flow.cost(network);
    stats.elapsed = start.elapsed();
    Ok((flow, cost, stats))
}

fn infeasible(residual: &Residual<'_>) -> Error {
    let stranded: i64 = residual.excess.iter().filter(|&&x| x > 0).sum();
    Error::Infeasible(format!("no augmenting path for the remaining {stranded} units"))
}

/// Successive shortest paths with unit augmentations.
///
/// Requires every edge cost to be discrete convex. Returns an optimal integer
/// flow, its cost, and solver statistics.
pub fn solve_ssp(network: &FlowNetwork) -> Result<(Flow, f64, SolveStats)> {
    solve_ssp_with(network, &SolveOptions::default())
}

pub fn solve_ssp_with(network: &FlowNetwork, options: &SolveOptions) -> Result<(Flow, f64, SolveStats)> {
    let start = Instant::now();
    let mut residual = Residual::new(network)?;
    residual.deadline = options.deadline;
    residual.init_potentials()?;
    let mut stats = SolveStats::default();
    while residual.has_excess(1) {
        stats.shortest_path_runs += 1;
        let Some(path) = residual.shortest_path(1)? else {
            return Err(infeasible(&residual));
        };
        let unit = residual.augment(&path, 1);
        stats.augmentations += 1;
        stats.path_costs.push(unit);
        if options.check_potentials {
            stats.observe(&residual, 1);
        }
    }
    if residual.unbalanced() {
        return Err(infeasible(&residual));
    }
    finish(network, residual, stats, start)
}

/// Capacity scaling: `Δ`-phases from the largest power of two not above the
/// largest supply, halving down to 1.
///
/// Same contract as [`solve_ssp`]. Optimal costs agree; flows may differ on
/// ties.
pub fn solve_capacity_scaling(network: &FlowNetwork) -> Result<(Flow, f64, SolveStats)> {
    solve_capacity_scaling_with(network, &SolveOptions::default())
}

pub fn solve_capacity_scaling_with(
    network: &FlowNetwork,
    options: &SolveOptions,
) -> Result<(Flow, f64, SolveStats)> {
    let start = Instant::now();
    let mut residual = Residual::new(network)?;
    residual.deadline = options.deadline;
    residual.init_potentials()?;
    let mut stats = SolveStats::default();
    let largest = residual.excess.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0);
    if largest == 0 {
        return finish(network, residual, stats, start);
    }
    let mut delta = 1u64 << (63 - largest.leading_zeros());
    loop {
        stats.scaling_phases += 1;
        // restore delta-optimality: one delta push per violating arc suffices
        // for convex costs
        for edge in 0..network.edges().len() {
            for forward in [true, false] {
                let arc = super::residual::Arc { edge, forward };
                if let Some(c) = residual.arc_cost(arc, delta) {
                    if residual.reduced_cost(arc, c) < -1e-12 {
                        residual.push_arc(arc, delta);
                        break;
                    }
                }
            }
        }
        while residual.has_excess(delta) && residual.has_deficit(delta) {
            stats.shortest_path_runs += 1;
            let Some(path) = residual.shortest_path(delta)? else { break };
            residual.augment(&path, delta);
            stats.augmentations += 1;
            if options.check_potentials {
                stats.observe(&residual, delta);
            }
        }
        if delta == 1 {
            break;
        }
        delta /= 2;
    }
    if residual.unbalanced() {
        return Err(infeasible(&residual));
    }
    finish(network, residual, stats, start)
}

/// Minimum-cost flow for networks whose costs are all affine; augments by
/// path bottlenecks rather than unit steps.
pub fn solve_linear(network: &FlowNetwork) -> Result<(Flow, f64, SolveStats)> {
    if let Some(k) = network.edges().iter().position(|e| !e.cost.is_affine()) {
        return Err(Error::InvalidInstance(format!("edge {k} does not have an affine cost")));
    }
    let start = Instant::now();
    let mut residual = Residual::new(network)?;
    residual.init_potentials()?;
    let mut stats = SolveStats::default();
    while residual.has_excess(1) {
        stats.shortest_path_runs += 1;
        let Some(path) = residual.shortest_path(1)? else {
            return Err(infeasible(&residual));
        };
        let amount = residual.bottleneck(&path);
        residual.augment(&path, amount);
        stats.augmentations += 1;
    }
    finish(network, residual, stats, start)
}

/// Dispatches on `solver`.
pub fn solve(network: &FlowNetwork, solver: InnerSolver, options: &SolveOptions) -> Result<(Flow, f64, SolveStats)> {
    match solver {
        InnerSolver::Ssp => solve_ssp_with(network, options),
        InnerSolver::CapacityScaling => solve_capacity_scaling_with(network, options),
    }
}
