//! `cgm-flow`: generate instances, solve them, compare methods, interpolate
//! histograms and time the inner solvers.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage, 3 infeasible, 4 I/O or
//! malformed input file.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use cgm_flow::instances::Grid;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cgm-flow", version, about = "Exact MAP inference for collective graphical models on paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic instance.
    Generate(GenerateArgs),
    /// Solve an instance file.
    Solve(SolveArgs),
    /// Compare all methods over seeded instance cells.
    Compare(CompareArgs),
    /// Interpolate histograms between two endpoint histograms on a grid.
    Interpolate(InterpolateArgs),
    /// Time the DCA with each inner solver over sweeps of M and R.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialArg {
    Uniform,
    Distance,
    GridGauss,
    GridInvdist,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Dca,
    Baseline,
    Oracle,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
pub enum StrategyArg {
    #[value(name = "L", alias = "l")]
    L,
    #[value(name = "M", alias = "m")]
    M,
    #[value(name = "R", alias = "r")]
    R,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerArg {
    Ssp,
    Cs,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpMethodArg {
    Dca,
    Baseline,
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let w: usize = w.parse().map_err(|_| format!("bad grid width `{w}`"))?;
    let h: usize = h.parse().map_err(|_| format!("bad grid height `{h}`"))?;
    Grid::new(w, h).map_err(|e| e.to_string())
}

#[derive(Args, serde::Serialize)]
pub struct GenerateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n_steps: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n_states: u64,
    #[arg(long)]
    population: u64,
    #[arg(long, value_enum, default_value = "uniform")]
    potential: PotentialArg,
    /// Grid for the grid potentials, e.g. `5x5`; must have R cells.
    #[arg(long, value_parser = parse_grid)]
    #[serde(skip)]
    grid: Option<Grid>,
    #[arg(long, default_value_t = 50.0)]
    noise_var: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
pub struct SolveArgs {
    #[arg(long, value_enum, default_value = "dca")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "L")]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value = "ssp")]
    inner: InnerArg,
    #[arg(long = "in")]
    input: PathBuf,
    /// Tables JSON; the report goes to `<out>.report.json` unless `--report` is given.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// DCA objective stall tolerance, or the baseline's relative gap.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    time_limit_sec: Option<f64>,
    /// Also run the exhaustive oracle and record its objective.
    #[arg(long)]
    check_oracle: bool,
    /// Oracle enumeration budget.
    #[arg(long, default_value_t = 10_000_000)]
    budget: u64,
    /// Dump the instance's flow network (`.dot` for Graphviz, JSON otherwise).
    #[arg(long)]
    dump_network: Option<PathBuf>,
}

#[derive(Args, serde::Serialize)]
pub struct CompareArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    n_states: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    population: Vec<u64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "uniform")]
    potential: Vec<PotentialArg>,
    /// Instances per cell.
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[arg(long, default_value_t = 5)]
    n_steps: usize,
    #[arg(long, default_value_t = 50.0)]
    noise_var: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
pub struct InterpolateArgs {
    #[arg(long, value_parser = parse_grid)]
    #[serde(skip)]
    grid: Grid,
    /// Histogram at the first step: counts separated by commas or whitespace.
    #[arg(long)]
    first: PathBuf,
    #[arg(long)]
    last: PathBuf,
    #[arg(long)]
    n_steps: usize,
    #[arg(long, value_enum, default_value = "dca")]
    method: InterpMethodArg,
    /// Observation precision `a` in `exp(-a (y - n)^2)`.
    #[arg(long, default_value_t = 5.0)]
    precision: f64,
    /// Full-precision CSV; a `.display.csv` sibling hides values below 1e-2.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 5)]
    n_steps: usize,
    /// R during the M sweep.
    #[arg(long, default_value_t = 10)]
    n_states: usize,
    /// M during the R sweep.
    #[arg(long, default_value_t = 100)]
    population: u64,
    #[arg(long, value_delimiter = ',')]
    m_sweep: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    r_sweep: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ssp,cs")]
    solvers: Vec<InnerArg>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-run limit; runs that hit it are recorded as censored.
    #[arg(long)]
    timeout_sec: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<cgm_flow::Error> for CliError {
    fn from(e: cgm_flow::Error) -> Self {
        use cgm_flow::Error as E;
        let code = match e {
            E::Infeasible(_) => 3,
            E::Io(_) | E::Json(_) | E::Schema(_) | E::Version { .. } => 4,
            E::InvalidInstance(_)
            | E::ShapeMismatch(_)
            | E::IndexOutOfRange(_)
            | E::NegativeEntry { .. }
            | E::InvalidAlpha { .. } => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { code: 4, message: e.to_string() }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("CGM_FLOW_THREADS") else { return Ok(()) };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("CGM_FLOW_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError { code: 1, message: e.to_string() })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Solve(args) => commands::solve(args),
        Command::Compare(args) => commands::compare(args),
        Command::Interpolate(args) => commands::interpolate(args),
        Command::Bench(args) => commands::bench(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
