//! Method comparison, timing sweeps and histogram interpolation.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::{solve_approximate_with, BaselineConfig};
use crate::dca::{run_dca, AlphaStrategy, DcaConfig};
use crate::error::{Error, Result};
use crate::flow::InnerSolver;
use crate::instances::{gen_interpolation, gen_synthetic, sparsity, Grid, PotentialKind};
use crate::model::{CgmInstance, ContingencyTables, FractionalTables};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    Dca(AlphaStrategy),
    Baseline,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Dca(AlphaStrategy::L),
        Method::Dca(AlphaStrategy::M),
        Method::Dca(AlphaStrategy::R),
        Method::Baseline,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Dca(AlphaStrategy::L) => "dca-L",
            Method::Dca(AlphaStrategy::M) => "dca-M",
            Method::Dca(AlphaStrategy::R) => "dca-R",
            Method::Baseline => "baseline",
        }
    }
}

#[derive(Clone, Debug)]
pub enum Solution {
    Integral(ContingencyTables),
    Fractional(FractionalTables),
}

impl Solution {
    pub fn to_fractional(&self) -> FractionalTables {
        match self {
            Solution::Integral(t) => t.to_fractional(),
            Solution::Fractional(t) => t.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// True objective; fractional output uses interpolated `ln z!`.
    pub objective: f64,
    pub sparsity: f64,
    pub seconds: f64,
    pub converged: bool,
}

/// Solves `instance` with `method`. DCA runs use `inner` for the flow solves.
pub fn run_method(instance: &CgmInstance, method: Method, inner: InnerSolver) -> Result<(Solution, MethodOutcome)> {
    let start = Instant::now();
    match method {
        Method::Dca(strategy) => {
            let config = DcaConfig { strategy, inner_solver: inner, ..DcaConfig::default() };
            let (tables, report) = run_dca(instance, &config)?;
            let outcome = MethodOutcome {
                method,
                objective: report.final_objective(),
                sparsity: sparsity(&tables, 1e-2),
                seconds: start.elapsed().as_secs_f64(),
                converged: report.converged,
            };
            Ok((Solution::Integral(tables), outcome))
        }
        Method::Baseline => {
            let (tables, report) = solve_approximate_with(instance, &BaselineConfig::default())?;
            let outcome = MethodOutcome {
                method,
                objective: report.true_objective,
                sparsity: report.sparsity,
                seconds: start.elapsed().as_secs_f64(),
                converged: report.converged,
            };
            Ok((Solution::Fractional(tables), outcome))
        }
    }
}

/// One cell of the comparison table: `instances` seeded synthetic instances.
#[derive(Clone, Debug, Serialize)]
pub struct CompareCell {
    pub n_steps: usize,
    pub n_states: usize,
    pub population: u64,
    pub kind: PotentialKind,
    pub noise_var: f64,
    pub instances: usize,
    /// Instance `k` uses seed `seed + k`.
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_objective: f64,
    pub mean_sparsity: f64,
    pub mean_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CellResult {
    pub cell: CompareCell,
    /// `outcomes[k][m]`: instance `k`, method `Method::ALL[m]`.
    pub outcomes: Vec<Vec<MethodOutcome>>,
    pub summaries: Vec<MethodSummary>,
}

impl CellResult {
    pub fn summary(&self, method: Method) -> &MethodSummary {
        self.summaries.iter().find(|s| s.method == method).expect("every method is summarized")
    }

    /// Instances where `a` attains an objective no larger than `b`.
    pub fn wins(&self, a: Method, b: Method) -> usize {
        let ia = Method::ALL.iter().position(|&m| m == a).unwrap();
        let ib = Method::ALL.iter().position(|&m| m == b).unwrap();
        self.outcomes.iter().filter(|o| o[ia].objective <= o[ib].objective).count()
    }
}

/// Runs every method on every instance of the cell; instances run in
/// parallel on the current rayon pool.
pub fn compare_cell(cell: &CompareCell) -> Result<CellResult> {
    let outcomes: Vec<Vec<MethodOutcome>> = (0..cell.instances)
        .into_par_iter()
        .map(|k| {
            let instance = gen_synthetic(
                cell.n_steps,
                cell.n_states,
                cell.population,
                cell.kind,
                cell.noise_var,
                cell.seed + k as u64,
            )?;
            Method::ALL
                .iter()
                .map(|&m| run_method(&instance, m, InnerSolver::Ssp).map(|(_, o)| o))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let n = outcomes.len().max(1) as f64;
    let summaries = Method::ALL
        .iter()
        .enumerate()
        .map(|(m, &method)| MethodSummary {
            method,
            mean_objective: outcomes.iter().map(|o| o[m].objective).sum::<f64>() / n,
            mean_sparsity: outcomes.iter().map(|o| o[m].sparsity).sum::<f64>() / n,
            mean_seconds: outcomes.iter().map(|o| o[m].seconds).sum::<f64>() / n,
        })
        .collect();
    Ok(CellResult { cell: cell.clone(), outcomes, summaries })
}

pub fn potential_name(kind: &PotentialKind) -> &'static str {
    match kind {
        PotentialKind::Uniform => "uniform",
        PotentialKind::Distance1D => "distance",
        PotentialKind::GridGaussian { .. } => "grid-gauss",
        PotentialKind::GridInverseDistance { .. } => "grid-invdist",
    }
}

/// One row per cell: mean objective, sparsity and seconds for each method.
pub fn comparison_csv(results: &[CellResult]) -> String {
    let mut out = String::from("n_states,population,potential,instances");
    for m in Method::ALL {
        let name = m.name();
        write!(out, ",{name}_objective,{name}_sparsity,{name}_seconds").unwrap();
    }
    out.push('\n');
    for r in results {
        let c = &r.cell;
        write!(out, "{},{},{},{}", c.n_states, c.population, potential_name(&c.kind), c.instances).unwrap();
        for m in Method::ALL {
            let s = r.summary(m);
            write!(out, ",{},{},{}", s.mean_objective, s.mean_sparsity, s.mean_seconds).unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchConfig {
    pub n_steps: usize,
    /// `R` held fixed during the `M` sweep.
    pub fixed_states: usize,
    /// `M` held fixed during the `R` sweep.
    pub fixed_population: u64,
    pub population_sweep: Vec<u64>,
    pub state_sweep: Vec<usize>,
    pub solvers: Vec<InnerSolver>,
    pub repeats: usize,
    pub seed: u64,
    #[serde(skip)]
    pub timeout: Option<Duration>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRecord {
    /// `"M"` or `"R"`.
    pub sweep: &'static str,
    pub n_states: usize,
    pub population: u64,
    pub solver: InnerSolver,
    pub repeat: usize,
    /// Mean wall time of one inner flow solve.
    pub inner_seconds: f64,
    pub total_seconds: f64,
    pub dca_iterations: usize,
    /// The run hit the timeout; times are lower bounds.
    pub censored: bool,
}

/// Times the DCA with each inner solver over the two sweeps. Runs are
/// sequential so timings do not compete for cores. Repeat `k` of a point
/// uses seed `seed + k`, the same instance for every solver.
pub fn bench(config: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if config.population_sweep.is_empty() && config.state_sweep.is_empty() {
        return Err(Error::InvalidInstance("both sweeps are empty".into()));
    }
    if config.repeats == 0 || config.solvers.is_empty() {
        return Err(Error::InvalidInstance("need at least one repeat and one solver".into()));
    }
    let mut points: Vec<(&'static str, usize, u64)> = Vec::new();
    points.extend(config.population_sweep.iter().map(|&m| ("M", config.fixed_states, m)));
    points.extend(config.state_sweep.iter().map(|&r| ("R", r, config.fixed_population)));

    let mut records = Vec::new();
    for (sweep, r, m) in points {
        for repeat in 0..config.repeats {
            let instance = gen_synthetic(config.n_steps, r, m, PotentialKind::Uniform, 50.0, config.seed + repeat as u64)?;
            for &solver in &config.solvers {
                let dca = DcaConfig { inner_solver: solver, time_limit: config.timeout, ..DcaConfig::default() };
                let start = Instant::now();
                let record = match run_dca(&instance, &dca) {
                    Ok((_, report)) => BenchRecord {
                        sweep,
                        n_states: r,
                        population: m,
                        solver,
                        repeat,
                        inner_seconds: report.mean_inner_seconds(),
                        total_seconds: report.wall_time_secs,
                        dca_iterations: report.iterations,
                        censored: false,
                    },
                    Err(Error::TimeLimit) => {
                        let elapsed = start.elapsed().as_secs_f64();
                        BenchRecord {
                            sweep,
                            n_states: r,
                            population: m,
                            solver,
                            repeat,
                            inner_seconds: elapsed,
                            total_seconds: elapsed,
                            dca_iterations: 0,
                            censored: true,
                        }
                    }
                    Err(e) => return Err(e),
                };
                records.push(record);
            }
        }
    }
    Ok(records)
}

pub fn solver_name(solver: InnerSolver) -> &'static str {
    match solver {
        InnerSolver::Ssp => "ssp",
        InnerSolver::CapacityScaling => "cs",
    }
}

pub fn bench_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from("sweep,n_states,population,solver,repeat,inner_seconds,total_seconds,dca_iterations,censored\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.sweep,
            r.n_states,
            r.population,
            solver_name(r.solver),
            r.repeat,
            r.inner_seconds,
            r.total_seconds,
            r.dca_iterations,
            r.censored
        )
        .unwrap();
    }
    out
}

/// Mean inner-solve time per point of one sweep for one solver, in sweep
/// order: `(sweep value, mean seconds)`.
pub fn sweep_means(records: &[BenchRecord], sweep: &str, solver: InnerSolver) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for r in records.iter().filter(|r| r.sweep == sweep && r.solver == solver) {
        let x = if sweep == "M" { r.population as f64 } else { r.n_states as f64 };
        match out.iter_mut().find(|p| p.0 == x) {
            Some(p) => {
                p.1 += r.inner_seconds;
                p.2 += 1;
            }
            None => out.push((x, r.inner_seconds, 1)),
        }
    }
    out.into_iter().map(|(x, s, c)| (x, s / c as f64)).collect()
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[k]] {
            end += 1;
        }
        // tied values share the average of their positions
        let rank = (k + end) as f64 / 2.0 + 1.0;
        for &idx in &order[k..=end] {
            out[idx] = rank;
        }
        k = end + 1;
    }
    out
}

/// Spearman rank correlation; `NaN` for fewer than two points or constant
/// input.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return f64::NAN;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[derive(Clone, Debug)]
pub struct Interpolation {
    /// `N` histograms: the two inputs at the ends, solved values between.
    pub histograms: Vec<Vec<f64>>,
    pub solution: Solution,
    pub outcome: MethodOutcome,
}

/// Fills in the histograms between `first` and `last` on `grid`.
pub fn interpolate(
    grid: Grid,
    first: &[u64],
    last: &[u64],
    n_steps: usize,
    method: Method,
    noise_precision: f64,
) -> Result<Interpolation> {
    let instance = gen_interpolation(grid, first, last, n_steps, noise_precision)?;
    let (solution, outcome) = run_method(&instance, method, InnerSolver::Ssp)?;
    let solved = solution.to_fractional();
    let mut histograms = solved.node;
    histograms[0] = first.iter().map(|&v| v as f64).collect();
    histograms[n_steps - 1] = last.iter().map(|&v| v as f64).collect();
    Ok(Interpolation { histograms, solution, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn comparison_has_four_method_columns() {
        let cell = CompareCell {
            n_steps: 3,
            n_states: 3,
            population: 6,
            kind: PotentialKind::Uniform,
            noise_var: 50.0,
            instances: 2,
            seed: 4,
        };
        let result = compare_cell(&cell).unwrap();
        let csv = comparison_csv(&[result]);
        let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
        assert_eq!(header.len(), 4 + 12);
        assert!(header.contains(&"dca-R_objective") && header.contains(&"baseline_seconds"));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn two_step_interpolation_returns_inputs() {
        let grid = Grid::new(2, 2).unwrap();
        let out = interpolate(grid, &[2, 0, 1, 0], &[0, 1, 0, 2], 2, Method::Dca(AlphaStrategy::L), 5.0).unwrap();
        assert_eq!(out.histograms, vec![vec![2.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 2.0]]);
    }

    #[test]
    fn empty_bench_is_rejected() {
        let config = BenchConfig {
            n_steps: 5,
            fixed_states: 3,
            fixed_population: 10,
            population_sweep: vec![],
            state_sweep: vec![],
            solvers: vec![InnerSolver::Ssp],
            repeats: 1,
            seed: 0,
            timeout: None,
        };
        assert!(bench(&config).is_err());
    }
}
