use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use cgm_flow::baseline::{solve_approximate_with, BaselineConfig};
use cgm_flow::dca::{run_dca, AlphaStrategy, DcaConfig};
use cgm_flow::experiments::{self, BenchConfig, CompareCell, Method};
use cgm_flow::flow::{build_flow_network, InnerSolver};
use cgm_flow::instances::io::{
    edge_csv, fractional_tables_to_json, instance_to_json, node_csv, parse_histogram, tables_to_json,
};
use cgm_flow::instances::{gen_synthetic, sparsity, PotentialKind};
use cgm_flow::model::{objective, validate_tables};
use cgm_flow::oracle::{brute_force_map, EnumerationBudget};
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{
    BenchArgs, CliError, CompareArgs, GenerateArgs, InnerArg, InterpMethodArg, InterpolateArgs, MethodArg,
    PotentialArg, SolveArgs, StrategyArg,
};

type CmdResult = Result<(), CliError>;

fn config_of<T: serde::Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn read_input(path: &Path, manifest: &mut RunManifest) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError { code: 4, message: format!("{}: {e}", path.display()) })?;
    manifest.add_input(path, &bytes);
    String::from_utf8(bytes).map_err(|_| CliError { code: 4, message: format!("{} is not UTF-8", path.display()) })
}

fn write_output(path: &Path, contents: &str, manifest: &mut RunManifest) -> CmdResult {
    std::fs::write(path, contents).map_err(|e| CliError { code: 4, message: format!("{}: {e}", path.display()) })?;
    manifest.add_output(path);
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn strategy(s: StrategyArg) -> AlphaStrategy {
    match s {
        StrategyArg::L => AlphaStrategy::L,
        StrategyArg::M => AlphaStrategy::M,
        StrategyArg::R => AlphaStrategy::R,
    }
}

fn inner_solver(s: InnerArg) -> InnerSolver {
    match s {
        InnerArg::Ssp => InnerSolver::Ssp,
        InnerArg::Cs => InnerSolver::CapacityScaling,
    }
}

fn potential_kind(p: PotentialArg, grid: Option<cgm_flow::instances::Grid>) -> Result<PotentialKind, CliError> {
    let need_grid = || grid.ok_or_else(|| CliError::usage("grid potentials need --grid WxH"));
    Ok(match p {
        PotentialArg::Uniform => PotentialKind::Uniform,
        PotentialArg::Distance => PotentialKind::Distance1D,
        PotentialArg::GridGauss => PotentialKind::GridGaussian { grid: need_grid()? },
        PotentialArg::GridInvdist => PotentialKind::GridInverseDistance { grid: need_grid()? },
    })
}

fn seconds(s: Option<f64>) -> Result<Option<Duration>, CliError> {
    s.map(|v| Duration::try_from_secs_f64(v).map_err(|_| CliError::usage(format!("bad duration {v}"))))
        .transpose()
}

pub fn generate(args: GenerateArgs) -> CmdResult {
    let kind = potential_kind(args.potential, args.grid)?;
    let mut manifest = RunManifest::new("generate", config_of(&args), vec![args.seed]);
    let instance = gen_synthetic(
        args.n_steps as usize,
        args.n_states as usize,
        args.population,
        kind,
        args.noise_var,
        args.seed,
    )?;
    write_output(&args.out, &instance_to_json(&instance), &mut manifest)?;
    manifest.write_next_to(&args.out)?;
    Ok(())
}

pub fn solve(args: SolveArgs) -> CmdResult {
    let mut manifest = RunManifest::new("solve", config_of(&args), vec![]);
    let text = read_input(&args.input, &mut manifest)?;
    let instance = cgm_flow::instances::io::instance_from_json(&text)?;
    let start = Instant::now();
    let time_limit = seconds(args.time_limit_sec)?;

    if let Some(path) = &args.dump_network {
        let network = build_flow_network(&instance);
        let dump = if path.extension().is_some_and(|e| e == "dot") {
            network.to_dot()
        } else {
            serde_json::to_string_pretty(&network.to_json()).expect("network serializes")
        };
        write_output(path, &dump, &mut manifest)?;
    }

    let mut report = match args.method {
        MethodArg::Dca => {
            let config = DcaConfig {
                strategy: strategy(args.strategy),
                inner_solver: inner_solver(args.inner),
                max_iters: args.max_iters,
                objective_tol: args.tol.unwrap_or(DcaConfig::default().objective_tol),
                time_limit,
            };
            let (tables, dca) = run_dca(&instance, &config)?;
            let violations = validate_tables(&instance, &tables)?;
            write_output(&args.out, &tables_to_json(&tables), &mut manifest)?;
            json!({
                "method": "dca",
                "strategy": args.strategy,
                "inner": args.inner,
                "objective": dca.final_objective(),
                "trajectory": dca.objectives,
                "iterations": dca.iterations,
                "converged": dca.converged,
                "integral": true,
                "feasible": violations.is_empty(),
                "sparsity": sparsity(&tables, 1e-2),
                "inner_solves": dca.inner,
                "timings": {
                    "wall_secs": dca.wall_time_secs,
                    "mean_inner_secs": dca.mean_inner_seconds(),
                },
            })
        }
        MethodArg::Baseline => {
            let mut config = BaselineConfig { max_iters: args.max_iters.max(1), time_limit, ..BaselineConfig::default() };
            if let Some(tol) = args.tol {
                config.tol = tol;
            }
            let (tables, base) = solve_approximate_with(&instance, &config)?;
            write_output(&args.out, &fractional_tables_to_json(&tables), &mut manifest)?;
            json!({
                "method": "baseline",
                "objective": base.true_objective,
                "approx_objective": base.approx_objective,
                "trajectory": base.approx_objectives,
                "iterations": base.iterations,
                "converged": base.converged,
                "duality_gap": base.duality_gap,
                "tol": base.tol,
                "integral": tables.is_integral(1e-9),
                "max_marginal_residual": base.max_marginal_residual,
                "sparsity": base.sparsity,
                "timings": { "wall_secs": base.wall_time_secs },
            })
        }
        MethodArg::Oracle => {
            let (tables, value) = brute_force_map(&instance, EnumerationBudget { max_states: args.budget })?;
            write_output(&args.out, &tables_to_json(&tables), &mut manifest)?;
            json!({
                "method": "oracle",
                "objective": value,
                "integral": true,
                "sparsity": sparsity(&tables, 1e-2),
                "timings": { "wall_secs": start.elapsed().as_secs_f64() },
            })
        }
    };

    if args.check_oracle {
        let (tables, value) = brute_force_map(&instance, EnumerationBudget { max_states: args.budget })?;
        debug_assert!((objective(&instance, &tables)? - value).abs() < 1e-9);
        report["oracle_objective"] = json!(value);
        report["oracle_gap"] = json!(report["objective"].as_f64().unwrap_or(f64::NAN) - value);
    }

    let report_path = args.report.clone().unwrap_or_else(|| with_suffix(&args.out, ".report.json"));
    write_output(&report_path, &serde_json::to_string_pretty(&report).expect("report serializes"), &mut manifest)?;
    manifest.write_next_to(&args.out)?;
    Ok(())
}

pub fn compare(args: CompareArgs) -> CmdResult {
    if args.instances == 0 {
        return Err(CliError::usage("--instances must be positive"));
    }
    let mut manifest = RunManifest::new("compare", config_of(&args), vec![args.seed]);
    let mut results = Vec::new();
    for &potential in &args.potential {
        let kind = potential_kind(potential, None)?;
        for &r in &args.n_states {
            for &m in &args.population {
                let cell = CompareCell {
                    n_steps: args.n_steps,
                    n_states: r,
                    population: m,
                    kind,
                    noise_var: args.noise_var,
                    instances: args.instances,
                    seed: args.seed,
                };
                match experiments::compare_cell(&cell) {
                    Ok(result) => results.push(result),
                    Err(e) => manifest.errors.push(format!(
                        "cell R={r} M={m} {}: {e}",
                        experiments::potential_name(&kind)
                    )),
                }
            }
        }
    }
    write_output(&args.out, &experiments::comparison_csv(&results), &mut manifest)?;
    for r in &results {
        let (l, b) = (r.summary(Method::Dca(AlphaStrategy::L)), r.summary(Method::Baseline));
        println!(
            "R={} M={} {}: dca-L {:.4} vs baseline {:.4} ({} of {} instances no worse)",
            r.cell.n_states,
            r.cell.population,
            experiments::potential_name(&r.cell.kind),
            l.mean_objective,
            b.mean_objective,
            r.wins(Method::Dca(AlphaStrategy::L), Method::Baseline),
            r.cell.instances
        );
    }
    manifest.write_next_to(&args.out)?;
    Ok(())
}

pub fn interpolate(args: InterpolateArgs) -> CmdResult {
    let mut manifest = RunManifest::new("interpolate", config_of(&args), vec![]);
    let first = parse_histogram(&read_input(&args.first, &mut manifest)?)?;
    let last = parse_histogram(&read_input(&args.last, &mut manifest)?)?;
    let method = match args.method {
        InterpMethodArg::Dca => Method::Dca(AlphaStrategy::L),
        InterpMethodArg::Baseline => Method::Baseline,
    };
    let result = experiments::interpolate(args.grid, &first, &last, args.n_steps, method, args.precision)?;
    write_output(&args.out, &node_csv(&result.histograms, None), &mut manifest)?;
    let display = args.out.with_extension("display.csv");
    write_output(&display, &node_csv(&result.histograms, Some(1e-2)), &mut manifest)?;
    let edges = args.out.with_extension("edges.csv");
    write_output(&edges, &edge_csv(&result.solution.to_fractional().edge, None), &mut manifest)?;
    println!(
        "{}: objective {:.6}, sparsity {:.3}",
        method.name(),
        result.outcome.objective,
        result.outcome.sparsity
    );
    manifest.write_next_to(&args.out)?;
    Ok(())
}

pub fn bench(args: BenchArgs) -> CmdResult {
    if args.m_sweep.is_empty() && args.r_sweep.is_empty() {
        return Err(CliError::usage("give at least one of --m-sweep and --r-sweep"));
    }
    if args.repeats == 0 {
        return Err(CliError::usage("--repeats must be positive"));
    }
    let mut manifest = RunManifest::new("bench", config_of(&args), vec![args.seed]);
    let config = BenchConfig {
        n_steps: args.n_steps,
        fixed_states: args.n_states,
        fixed_population: args.population,
        population_sweep: args.m_sweep.clone(),
        state_sweep: args.r_sweep.clone(),
        solvers: args.solvers.iter().map(|&s| inner_solver(s)).collect(),
        repeats: args.repeats,
        seed: args.seed,
        timeout: seconds(args.timeout_sec)?,
    };
    let records = experiments::bench(&config)?;
    write_output(&args.out, &experiments::bench_csv(&records), &mut manifest)?;
    for sweep in ["M", "R"] {
        for &solver in &config.solvers {
            let means = experiments::sweep_means(&records, sweep, solver);
            if means.len() < 2 {
                continue;
            }
            let (x, y): (Vec<f64>, Vec<f64>) = means.iter().copied().unzip();
            println!(
                "{sweep} sweep, {}: Spearman {:+.3} over {} points",
                experiments::solver_name(solver),
                experiments::spearman(&x, &y),
                x.len()
            );
        }
    }
    manifest.write_next_to(&args.out)?;
    Ok(())
}
