//! Approximation-based comparison method.
//!
//! Every `ln z!` is replaced by Stirling's `z ln z - z` and the tables are
//! relaxed to nonnegative reals. On a path the relaxed objective splits into
//! a Bethe-entropy part `B`, which is exactly the negative entropy of a Markov
//! chain scaled by `M`, and the separable convex observation part `H`.
//!
//! The default solver works on the Fenchel dual. The conjugate of `B` in the
//! chain's node log-weights `theta` is `M ln Z(theta)`, so the dual
//! `D(theta) = M ln Z(theta) + sum H*(-theta)` is smooth, needs only a
//! forward-backward pass per evaluation, and is minimized with L-BFGS over
//! the cells that carry an observation term. Every dual iterate maps to
//! feasible primal tables, the scaled chain marginals. Conditional gradient
//! with exact line search is available as a slower alternative. Both stop on
//! the Frank-Wolfe duality gap of the primal tables, whose linear
//! minimization is a linear-cost flow solve.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{build_linear_network, extract_tables, solve_linear};
use crate::instances::sparsity;
use crate::model::logfact::stirling;
use crate::model::{objective_fractional, CgmInstance, FractionalTables, NoiseModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineMethod {
    Dual,
    ConditionalGradient,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// Stop once the duality gap is at most `tol * max(1, |objective|)`.
    pub tol: f64,
    pub max_iters: usize,
    /// Floor applied to entries inside logarithms and `1 / z`. It only keeps
    /// them finite: entries below it bias the duality gap by up to
    /// `epsilon / e` each.
    pub epsilon: f64,
    #[serde(skip)]
    pub time_limit: Option<Duration>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            method: BaselineMethod::Dual,
            tol: 1e-6,
            max_iters: 100_000,
            epsilon: 1e-300,
            time_limit: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselineReport {
    pub method: BaselineMethod,
    /// Best approximate objective so far after each iteration, starting
    /// point first.
    pub approx_objectives: Vec<f64>,
    pub iterations: usize,
    /// False when `max_iters` ran out, or no descent step was found, before
    /// the gap reached the tolerance.
    pub converged: bool,
    /// Last Frank-Wolfe gap; once converged it bounds the suboptimality of
    /// the returned tables.
    pub duality_gap: f64,
    pub tol: f64,
    pub approx_objective: f64,
    /// The output scored by the true objective with interpolated `ln z!`.
    pub true_objective: f64,
    pub max_marginal_residual: f64,
    pub sparsity: f64,
    pub wall_time_secs: f64,
}

/// The Stirling-approximated objective over the relaxed table polytope.
#[derive(Clone, Copy)]
pub struct RelaxedProblem<'a> {
    instance: &'a CgmInstance,
    epsilon: f64,
}

type Gradient = (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>);

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl<'a> RelaxedProblem<'a> {
    pub fn new(instance: &'a CgmInstance, epsilon: f64) -> Self {
        Self { instance, epsilon }
    }

    /// Approximate objective; entries are assumed nonnegative.
    pub fn objective(&self, x: &FractionalTables) -> f64 {
        let inst = self.instance;
        let mut total = 0.0;
        for (t, mat) in x.edge.iter().enumerate() {
            for (i, row) in mat.iter().enumerate() {
                for (j, &z) in row.iter().enumerate() {
                    total += stirling(z) - z * inst.log_potential(t, i, j);
                }
            }
        }
        for (t, row) in x.node.iter().enumerate() {
            for (i, &z) in row.iter().enumerate() {
                if inst.is_interior(t) {
                    total -= stirling(z);
                }
                total += inst.noise(t, i).nll_real(inst.observation(t, i), z);
            }
        }
        total
    }

    fn observation_gradient(&self, x: &FractionalTables) -> Vec<Vec<f64>> {
        let inst = self.instance;
        x.node
            .iter()
            .enumerate()
            .map(|(t, row)| {
                row.iter()
                    .enumerate()
                    .map(|(i, &z)| inst.noise(t, i).nll_derivative(inst.observation(t, i), z, self.epsilon))
                    .collect()
            })
            .collect()
    }

    /// Gradient in the node and edge entries, logarithms floored at `epsilon`.
    pub fn gradient(&self, x: &FractionalTables) -> Gradient {
        let inst = self.instance;
        let mut node = self.observation_gradient(x);
        for (t, row) in node.iter_mut().enumerate() {
            if inst.is_interior(t) {
                for (i, g) in row.iter_mut().enumerate() {
                    *g -= x.node[t][i].max(self.epsilon).ln();
                }
            }
        }
        let edge = x
            .edge
            .iter()
            .enumerate()
            .map(|(t, mat)| {
                mat.iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(j, &z)| z.max(self.epsilon).ln() - inst.log_potential(t, i, j))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        (node, edge)
    }

    /// A vertex of the polytope minimizing the linear function `gradient`:
    /// the whole population on one cheapest path.
    pub fn linear_minimizer(&self, gradient: &Gradient) -> Result<FractionalTables> {
        let network = build_linear_network(self.instance, &gradient.0, &gradient.1);
        let (flow, _, _) = solve_linear(&network)?;
        Ok(extract_tables(&network, &flow)?.to_fractional())
    }

    /// Frank-Wolfe gap `<grad F(x), x - s>`, an upper bound on
    /// `F(x) - min F` for convex `F`.
    pub fn duality_gap(&self, x: &FractionalTables) -> Result<f64> {
        let grad = self.gradient(x);
        let s = self.linear_minimizer(&grad)?;
        Ok(inner(&grad, x) - inner(&grad, &s))
    }

    /// `M` times the marginals of the chain with transition weights `phi`
    /// and node log-weights `theta`.
    pub fn chain_tables(&self, theta: &[Vec<f64>]) -> FractionalTables {
        self.chain(theta).0
    }

    /// Chain tables and `ln Z(theta)`.
    fn chain(&self, theta: &[Vec<f64>]) -> (FractionalTables, f64) {
        let inst = self.instance;
        let (n, r) = (inst.n_steps(), inst.n_states());
        let m = inst.population() as f64;
        let mut alpha = vec![vec![0.0; r]; n];
        let mut beta = vec![vec![0.0; r]; n];
        alpha[0].clone_from(&theta[0]);
        for t in 0..n - 1 {
            for j in 0..r {
                let a = &alpha[t];
                alpha[t + 1][j] = theta[t + 1][j] + log_sum_exp((0..r).map(|i| a[i] + inst.log_potential(t, i, j)));
            }
        }
        for t in (0..n - 1).rev() {
            for i in 0..r {
                let b = &beta[t + 1];
                beta[t][i] =
                    log_sum_exp((0..r).map(|j| inst.log_potential(t, i, j) + theta[t + 1][j] + b[j]));
            }
        }
        let log_z = log_sum_exp(alpha[n - 1].iter().copied());

        let mut x = FractionalTables { node: vec![vec![0.0; r]; n], edge: vec![vec![vec![0.0; r]; r]; n - 1] };
        for t in 0..n - 1 {
            for i in 0..r {
                for j in 0..r {
                    let lp = alpha[t][i] + inst.log_potential(t, i, j) + theta[t + 1][j] + beta[t + 1][j] - log_z;
                    x.edge[t][i][j] = m * lp.exp();
                }
            }
        }
        // node tables from the edge tables so the marginals agree exactly
        if n == 1 {
            for i in 0..r {
                x.node[0][i] = m * (alpha[0][i] - log_z).exp();
            }
        } else {
            for t in 0..n - 1 {
                for i in 0..r {
                    x.node[t][i] = x.edge[t][i].iter().sum();
                }
            }
            for j in 0..r {
                x.node[n - 1][j] = (0..r).map(|i| x.edge[n - 2][i][j]).sum();
            }
        }
        (x, log_z)
    }
}

fn inner(grad: &Gradient, x: &FractionalTables) -> f64 {
    let node: f64 = grad.0.iter().flatten().zip(x.node.iter().flatten()).map(|(g, v)| g * v).sum();
    let edge: f64 = grad
        .1
        .iter()
        .flatten()
        .flatten()
        .zip(x.edge.iter().flatten().flatten())
        .map(|(g, v)| g * v)
        .sum();
    node + edge
}

fn combine(x: &FractionalTables, s: &FractionalTables, gamma: f64) -> FractionalTables {
    let mix = |a: f64, b: f64| ((1.0 - gamma) * a + gamma * b).max(0.0);
    FractionalTables {
        node: x
            .node
            .iter()
            .zip(&s.node)
            .map(|(a, b)| a.iter().zip(b).map(|(&a, &b)| mix(a, b)).collect())
            .collect(),
        edge: x
            .edge
            .iter()
            .zip(&s.edge)
            .map(|(ma, mb)| {
                ma.iter()
                    .zip(mb)
                    .map(|(a, b)| a.iter().zip(b).map(|(&a, &b)| mix(a, b)).collect())
                    .collect()
            })
            .collect(),
    }
}

/// Runs the baseline with default settings apart from `tol` and `max_iters`.
pub fn solve_approximate(
    instance: &CgmInstance,
    tol: f64,
    max_iters: usize,
) -> Result<(FractionalTables, BaselineReport)> {
    let config = BaselineConfig { tol, max_iters, ..BaselineConfig::default() };
    solve_approximate_with(instance, &config)
}

pub fn solve_approximate_with(
    instance: &CgmInstance,
    config: &BaselineConfig,
) -> Result<(FractionalTables, BaselineReport)> {
    if !(config.tol >= 0.0 && config.epsilon > 0.0) {
        return Err(Error::InvalidInstance("baseline needs tol >= 0 and epsilon > 0".into()));
    }
    let start = Instant::now();
    let mut run = Run {
        problem: RelaxedProblem::new(instance, config.epsilon),
        config,
        deadline: config.time_limit.map(|d| start + d),
        best: None,
        trajectory: Vec::new(),
        iterations: 0,
        gap: f64::INFINITY,
        converged: false,
    };
    match config.method {
        BaselineMethod::Dual => run.dual()?,
        BaselineMethod::ConditionalGradient => run.conditional_gradient()?,
    }
    let (x, value) = run.best.take().expect("the starting point is always recorded");
    let report = BaselineReport {
        method: config.method,
        approx_objectives: run.trajectory,
        iterations: run.iterations,
        converged: run.converged,
        duality_gap: run.gap,
        tol: config.tol,
        approx_objective: value,
        true_objective: objective_fractional(instance, &x)?,
        max_marginal_residual: x.max_marginal_residual(instance.population() as f64),
        sparsity: sparsity(&x, 1e-2),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((x, report))
}

struct Run<'a> {
    problem: RelaxedProblem<'a>,
    config: &'a BaselineConfig,
    deadline: Option<Instant>,
    best: Option<(FractionalTables, f64)>,
    trajectory: Vec<f64>,
    iterations: usize,
    gap: f64,
    converged: bool,
}

impl Run<'_> {
    /// Records `x`, keeping the best tables seen, and returns true once its
    /// gap is within tolerance.
    fn visit(&mut self, x: FractionalTables) -> Result<bool> {
        if self.deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(Error::TimeLimit);
        }
        let value = self.problem.objective(&x);
        let grad = self.problem.gradient(&x);
        let s = self.problem.linear_minimizer(&grad)?;
        self.gap = inner(&grad, &x) - inner(&grad, &s);
        self.converged = self.gap <= self.config.tol * value.abs().max(1.0);
        if self.best.as_ref().is_none_or(|(_, b)| value <= *b) {
            self.best = Some((x, value));
        }
        self.trajectory.push(self.best.as_ref().map_or(value, |b| b.1));
        Ok(self.converged)
    }

    fn dual(&mut self) -> Result<()> {
        let dual = DualProblem::new(self.problem);
        let mut v = vec![0.0; dual.cells.len()];
        let (mut value, mut grad, x) = dual.eval(&v).expect("theta = 0 lies in the dual domain");
        let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
        if self.visit(x)? || v.is_empty() {
            return Ok(());
        }
        while self.iterations < self.config.max_iters {
            self.iterations += 1;
            let mut d = lbfgs_direction(&grad, &memory);
            if dot(&d, &grad) >= 0.0 || memory.is_empty() {
                memory.clear();
                let scale = grad.iter().fold(1.0f64, |m, g| m.max(g.abs()));
                d = grad.iter().map(|g| -g / scale).collect();
            }
            let slope = dot(&d, &grad);
            let mut step = 1.0;
            let mut found = None;
            for _ in 0..60 {
                let trial: Vec<f64> = v.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                if let Some((tv, tg, tx)) = dual.eval(&trial) {
                    if tv <= value + 1e-4 * step * slope {
                        found = Some((trial, tv, tg, tx));
                        break;
                    }
                }
                step *= 0.5;
            }
            let Some((next, next_value, next_grad, x)) = found else {
                if memory.is_empty() {
                    // no descent at machine precision
                    return Ok(());
                }
                memory.clear();
                continue;
            };
            let s: Vec<f64> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
            if dot(&s, &y) > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                if memory.len() == LBFGS_MEMORY {
                    memory.pop_front();
                }
                memory.push_back((s, y));
            }
            (v, value, grad) = (next, next_value, next_grad);
            if self.visit(x)? {
                return Ok(());
            }
        }
        Ok(())
    }

    fn conditional_gradient(&mut self) -> Result<()> {
        let r = self.problem.instance.n_states();
        let mut x = self.problem.chain_tables(&vec![vec![0.0; r]; self.problem.instance.n_steps()]);
        let mut value = self.problem.objective(&x);
        if self.visit(x.clone())? {
            return Ok(());
        }
        while self.iterations < self.config.max_iters {
            self.iterations += 1;
            let grad = self.problem.gradient(&x);
            let s = self.problem.linear_minimizer(&grad)?;
            let gamma = golden_section(|g| self.problem.objective(&combine(&x, &s, g)));
            let next = combine(&x, &s, gamma);
            let next_value = self.problem.objective(&next);
            if next_value > value {
                return Ok(());
            }
            (x, value) = (next.clone(), next_value);
            if self.visit(next)? {
                return Ok(());
            }
        }
        Ok(())
    }
}

const LBFGS_MEMORY: usize = 10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-H g` for the L-BFGS inverse Hessian estimate `H`.
fn lbfgs_direction(grad: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let a = dot(s, &q) / dot(y, s);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = dot(y, &q) / dot(y, s);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

/// `D(theta) = M ln Z(theta) + sum h*(-theta)` over the cells with an
/// observation term. Other cells keep `theta = 0`, except Poisson cells with
/// `y = 0`, whose `h(z) = z` is linear and fixes `theta = -1`.
struct DualProblem<'a> {
    problem: RelaxedProblem<'a>,
    cells: Vec<(usize, usize, NoiseModel, f64)>,
    base: Vec<Vec<f64>>,
}

impl<'a> DualProblem<'a> {
    fn new(problem: RelaxedProblem<'a>) -> Self {
        let inst = problem.instance;
        let mut base = vec![vec![0.0; inst.n_states()]; inst.n_steps()];
        let mut cells = Vec::new();
        for (t, row) in base.iter_mut().enumerate() {
            for (i, theta) in row.iter_mut().enumerate() {
                let (noise, y) = (inst.noise(t, i), inst.observation(t, i));
                match noise {
                    NoiseModel::Missing => {}
                    NoiseModel::Poisson if y == 0.0 => *theta = -1.0,
                    _ => cells.push((t, i, noise, y)),
                }
            }
        }
        Self { problem, cells, base }
    }

    /// Value, gradient and primal tables at `v`; `None` outside the domain.
    fn eval(&self, v: &[f64]) -> Option<(f64, Vec<f64>, FractionalTables)> {
        let mut theta = self.base.clone();
        let mut conjugate = 0.0;
        let mut slopes = Vec::with_capacity(v.len());
        for (&(t, i, noise, y), &vk) in self.cells.iter().zip(v) {
            theta[t][i] = vk;
            match noise {
                NoiseModel::Gaussian { var } => {
                    conjugate += 0.5 * var * vk * vk - vk * y;
                    slopes.push(var * vk - y);
                }
                NoiseModel::Poisson => {
                    if vk <= -1.0 {
                        return None;
                    }
                    conjugate += y * (y / (1.0 + vk)).ln() - y;
                    slopes.push(-y / (1.0 + vk));
                }
                NoiseModel::Missing => unreachable!("missing cells carry no dual variable"),
            }
        }
        let (x, log_z) = self.problem.chain(&theta);
        let value = self.problem.instance.population() as f64 * log_z + conjugate;
        let grad = self.cells.iter().zip(slopes).map(|(&(t, i, ..), s)| x.node[t][i] + s).collect();
        value.is_finite().then_some((value, grad, x))
    }
}

/// Minimizer of a convex function on `[0, 1]`.
fn golden_section(f: impl Fn(f64) -> f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // the endpoints are not probed by the bracketing
    [0.0, mid, 1.0].into_iter().min_by(|&p, &q| f(p).total_cmp(&f(q))).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{approx_objective, NoiseModel};

    fn instance(noise: NoiseModel, y: f64) -> CgmInstance {
        CgmInstance::new(
            4,
            3,
            9,
            vec![
                vec![vec![1.0, 4.0, 2.0], vec![3.0, 1.0, 6.0], vec![2.0, 5.0, 1.0]],
                vec![vec![2.0, 1.0, 1.0], vec![1.0, 8.0, 2.0], vec![7.0, 1.0, 3.0]],
                vec![vec![1.0, 1.0, 9.0], vec![4.0, 2.0, 1.0], vec![1.0, 3.0, 2.0]],
            ],
            vec![vec![Some(y); 3]; 4],
            vec![vec![noise; 3]; 4],
        )
        .unwrap()
    }

    #[test]
    fn single_route_example() {
        let inst = CgmInstance::new(
            2,
            1,
            2,
            vec![vec![vec![1.0]]],
            vec![vec![None]; 2],
            vec![vec![NoiseModel::Missing]; 2],
        )
        .unwrap();
        let (x, report) = solve_approximate(&inst, 1e-6, 100).unwrap();
        assert!(report.converged);
        assert!((x.edge[0][0][0] - 2.0).abs() < 1e-12);
        assert!((report.approx_objective - (2.0 * 2f64.ln() - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn dual_solver_converges_with_small_gap() {
        for (noise, y) in [(NoiseModel::Gaussian { var: 2.0 }, 3.0), (NoiseModel::Poisson, 2.0)] {
            let inst = instance(noise, y);
            let (x, report) = solve_approximate(&inst, 1e-6, 10_000).unwrap();
            assert!(report.converged, "{report:?}");
            assert!(report.duality_gap <= 1e-6 * report.approx_objective.abs().max(1.0));
            assert!(report.max_marginal_residual <= 1e-6);
            for w in report.approx_objectives.windows(2) {
                assert!(w[1] <= w[0]);
            }
            let direct = approx_objective(&inst, &x).unwrap();
            assert!((direct - report.approx_objective).abs() < 1e-9);
        }
    }

    #[test]
    fn solvers_attain_the_same_value() {
        let inst = instance(NoiseModel::Gaussian { var: 1.0 }, 2.0);
        let (_, md) = solve_approximate(&inst, 1e-8, 10_000).unwrap();
        let config = BaselineConfig {
            method: BaselineMethod::ConditionalGradient,
            tol: 1e-4,
            max_iters: 20_000,
            ..BaselineConfig::default()
        };
        let (_, cg) = solve_approximate_with(&inst, &config).unwrap();
        assert!(md.converged);
        for w in cg.approx_objectives.windows(2) {
            assert!(w[1] <= w[0]);
        }
        // the gap bounds the suboptimality of each run
        let scale = md.approx_objective.abs().max(1.0);
        assert!(cg.approx_objective >= md.approx_objective - 1e-8 * scale);
        assert!(cg.approx_objective - md.approx_objective <= cg.duality_gap + 1e-9);
    }

    #[test]
    fn chain_tables_are_feasible() {
        let template = instance(NoiseModel::Poisson, 1.0);
        let inst = CgmInstance::new(
            4,
            3,
            9,
            template.potentials().to_vec(),
            vec![vec![None; 3]; 4],
            vec![vec![NoiseModel::Missing; 3]; 4],
        )
        .unwrap();
        let p = RelaxedProblem::new(&inst, 1e-6);
        let theta = vec![vec![0.3, -2.0, 1.0], vec![0.0; 3], vec![5.0, 0.0, -1.0], vec![0.1, 0.2, 0.3]];
        let x = p.chain_tables(&theta);
        assert!(x.max_marginal_residual(9.0) < 1e-12);
        // without observations the chain at theta = 0 is already optimal
        let x0 = p.chain_tables(&vec![vec![0.0; 3]; 4]);
        assert!(p.duality_gap(&x0).unwrap().abs() < 1e-9);
        assert!(p.objective(&x0) <= p.objective(&x));
    }

    #[test]
    fn time_limit_is_honoured() {
        let inst = instance(NoiseModel::Gaussian { var: 0.1 }, 5.0);
        let config = BaselineConfig { time_limit: Some(Duration::ZERO), ..BaselineConfig::default() };
        assert!(matches!(solve_approximate_with(&inst, &config), Err(Error::TimeLimit)));
    }
}
