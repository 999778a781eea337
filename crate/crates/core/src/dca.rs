//! Discrete difference-of-convex iteration for the MAP objective.
//!
//! The objective splits into a convex part (transition and observation
//! terms) and the concave interior-node part `sum g(n_ti)`. Each iteration
//! replaces `g` by a tangent line at the current tables, solves the resulting
//! convex-cost flow exactly and moves to its optimum. Objective values never
//! increase, and the iteration stops once they stall.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, build_surrogate_network, extract_tables, InnerSolver, SolveOptions};
use crate::model::{log_factorial, objective, CgmInstance, ContingencyTables};

/// Slope rule for the tangent of `g(z) = -ln z!` at a point `n`.
///
/// Any slope in `[-ln(n + 1), -ln n]` gives an upper bound of `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlphaStrategy {
    /// `-ln n`, the left end of the interval.
    L,
    /// Midpoint `-(ln n + ln(n + 1)) / 2`.
    M,
    /// `-ln(n + 1)`, the right end.
    R,
}

impl AlphaStrategy {
    pub const ALL: [AlphaStrategy; 3] = [AlphaStrategy::L, AlphaStrategy::M, AlphaStrategy::R];
}

/// Tangent slope for `strategy` at `n`; every strategy returns 0 at `n = 0`.
pub fn alpha_value(strategy: AlphaStrategy, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let lo = (n as f64).ln();
    let hi = ((n + 1) as f64).ln();
    match strategy {
        AlphaStrategy::L => -lo,
        AlphaStrategy::M => -0.5 * (lo + hi),
        AlphaStrategy::R => -hi,
    }
}

/// `-ln(n_lin!) + alpha (z - n_lin)`.
///
/// Fails unless `-ln(n_lin + 1) <= alpha <= -ln(n_lin)`.
pub fn surrogate_g(n_lin: u64, alpha: f64, z: u64) -> Result<f64> {
    let lower = -((n_lin + 1) as f64).ln();
    let upper = if n_lin == 0 { f64::INFINITY } else { -(n_lin as f64).ln() };
    let slack = 1e-12;
    if !(alpha >= lower - slack && alpha <= upper + slack) {
        return Err(Error::InvalidAlpha { n: n_lin, alpha, lower, upper });
    }
    Ok(-log_factorial(n_lin) + alpha * (z as f64 - n_lin as f64))
}

/// The objective with every interior `g` replaced by its tangent at
/// `linearization`. Bounds [`objective`] from above.
pub fn surrogate_objective(
    instance: &CgmInstance,
    linearization: &ContingencyTables,
    strategy: AlphaStrategy,
    tables: &ContingencyTables,
) -> Result<f64> {
    linearization.check_shape(instance)?;
    let exact = objective(instance, tables)?;
    let mut correction = 0.0;
    for t in 0..instance.n_steps() {
        if !instance.is_interior(t) {
            continue;
        }
        for i in 0..instance.n_states() {
            let n_lin = linearization.node[t][i];
            let z = tables.node[t][i];
            correction += surrogate_g(n_lin, alpha_value(strategy, n_lin), z)? + log_factorial(z);
        }
    }
    Ok(exact + correction)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DcaConfig {
    pub strategy: AlphaStrategy,
    pub inner_solver: InnerSolver,
    pub max_iters: usize,
    pub objective_tol: f64,
    /// Abort with [`Error::TimeLimit`] after this long.
    #[serde(skip)]
    pub time_limit: Option<Duration>,
}

impl Default for DcaConfig {
    fn default() -> Self {
        Self {
            strategy: AlphaStrategy::L,
            inner_solver: InnerSolver::Ssp,
            max_iters: 1000,
            objective_tol: 1e-9,
            time_limit: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InnerSolveSummary {
    pub augmentations: u64,
    pub shortest_path_runs: u64,
    pub scaling_phases: u32,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DcaReport {
    /// Objective of the tables produced by each inner solve, in order.
    pub objectives: Vec<f64>,
    /// Number of inner solves.
    pub iterations: usize,
    /// False when `max_iters` was reached before the objective stalled.
    pub converged: bool,
    pub inner: Vec<InnerSolveSummary>,
    pub wall_time_secs: f64,
}

impl DcaReport {
    pub fn final_objective(&self) -> f64 {
        self.objectives.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mean_inner_seconds(&self) -> f64 {
        if self.inner.is_empty() {
            return 0.0;
        }
        self.inner.iter().map(|s| s.seconds).sum::<f64>() / self.inner.len() as f64
    }
}

/// Runs the DC iteration from the all-zero linearization point.
///
/// Returns the best tables visited, which are integral and feasible.
pub fn run_dca(instance: &CgmInstance, config: &DcaConfig) -> Result<(ContingencyTables, DcaReport)> {
    let start = Instant::now();
    let options = SolveOptions {
        deadline: config.time_limit.map(|d| start + d),
        check_potentials: false,
    };
    let has_concave_part = instance.n_steps() > 2;

    let mut linearization = ContingencyTables::zeros_like(instance);
    let mut best: Option<(ContingencyTables, f64)> = None;
    let mut objectives = Vec::new();
    let mut inner = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_iters {
        let network = build_surrogate_network(instance, &linearization, config.strategy)?;
        let (flow, _, stats) = flow::solve(&network, config.inner_solver, &options)?;
        let next = extract_tables(&network, &flow)?;
        let value = objective(instance, &next)?;
        inner.push(InnerSolveSummary {
            augmentations: stats.augmentations,
            shortest_path_runs: stats.shortest_path_runs,
            scaling_phases: stats.scaling_phases,
            seconds: stats.elapsed.as_secs_f64(),
        });
        let previous = objectives.last().copied();
        objectives.push(value);

        let improved = best.as_ref().map_or(true, |(_, b)| value < *b);
        let stalled = match previous {
            Some(p) => next == linearization || value == p || (value - p).abs() <= config.objective_tol,
            None => false,
        };
        if improved {
            best = Some((next.clone(), value));
        }
        if !has_concave_part || stalled {
            converged = true;
            break;
        }
        linearization = next;
    }

    let (tables, _) = best.expect("at least one iteration runs");
    let report = DcaReport {
        iterations: objectives.len(),
        objectives,
        converged,
        inner,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((tables, report))
}
