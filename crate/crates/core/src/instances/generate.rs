use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::rng::SeededRng;
use crate::model::{CgmInstance, NoiseModel};

// stream ids within one seed
const POTENTIAL_STREAM: u64 = 0;
const OBSERVATION_STREAM: u64 = 1;
const TRAJECTORY_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

/// A `width x height` grid of cells, numbered row-major; cell `i` has
/// center `(i % width, i / width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
}

impl Grid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInstance(format!("grid {width}x{height} is empty")));
        }
        Ok(Self { width, height })
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn center(&self, i: usize) -> (f64, f64) {
        ((i % self.width) as f64, (i / self.width) as f64)
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.center(i), self.center(j));
        (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    /// Independent uniform integers in `1..=10`.
    Uniform,
    /// `1 / (|i - j| + 1)`.
    Distance1D,
    /// `exp(-d^2)` between grid cell centers.
    GridGaussian { grid: Grid },
    /// `1 / (1 + d)` between grid cell centers.
    GridInverseDistance { grid: Grid },
}

impl PotentialKind {
    fn grid(&self) -> Option<Grid> {
        match *self {
            PotentialKind::GridGaussian { grid } | PotentialKind::GridInverseDistance { grid } => Some(grid),
            _ => None,
        }
    }

    fn potentials(&self, n_steps: usize, n_states: usize, rng: &mut SeededRng) -> Vec<Vec<Vec<f64>>> {
        let r = n_states;
        (0..n_steps.saturating_sub(1))
            .map(|_| {
                (0..r)
                    .map(|i| {
                        (0..r)
                            .map(|j| match *self {
                                PotentialKind::Uniform => rng.int_in(1, 10) as f64,
                                PotentialKind::Distance1D => 1.0 / ((i as f64 - j as f64).abs() + 1.0),
                                PotentialKind::GridGaussian { grid } => (-grid.squared_distance(i, j)).exp(),
                                PotentialKind::GridInverseDistance { grid } => {
                                    1.0 / (1.0 + grid.squared_distance(i, j).sqrt())
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

fn check_dims(n_steps: usize, n_states: usize) -> Result<()> {
    if n_steps == 0 || n_states == 0 {
        return Err(Error::InvalidInstance(format!(
            "need positive dimensions, got N = {n_steps}, R = {n_states}"
        )));
    }
    Ok(())
}

/// Synthetic instance with Gaussian noise of variance `noise_var` on every
/// cell.
///
/// For `Uniform` and `Distance1D`, observations are uniform integers in
/// `1..=2 floor(M / R)` (all 1 when `M < R`). For the grid kinds they are
/// occupancy counts of `M` trajectories sampled from the chain with the
/// generated potentials, plus Gaussian noise and clamped at 0.
pub fn gen_synthetic(
    n_steps: usize,
    n_states: usize,
    population: u64,
    kind: PotentialKind,
    noise_var: f64,
    seed: u64,
) -> Result<CgmInstance> {
    check_dims(n_steps, n_states)?;
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(Error::InvalidInstance(format!("noise variance {noise_var} is not positive")));
    }
    if let Some(grid) = kind.grid() {
        if grid.cells() != n_states {
            return Err(Error::InvalidInstance(format!(
                "grid {}x{} has {} cells but R = {n_states}",
                grid.width,
                grid.height,
                grid.cells()
            )));
        }
    }
    let potentials = kind.potentials(n_steps, n_states, &mut SeededRng::new(seed, POTENTIAL_STREAM));
    let observations: Vec<Vec<Option<f64>>> = match kind {
        PotentialKind::Uniform | PotentialKind::Distance1D => {
            let mut rng = SeededRng::new(seed, OBSERVATION_STREAM);
            let top = 2 * (population / n_states as u64);
            (0..n_steps)
                .map(|_| {
                    (0..n_states)
                        .map(|_| Some(if top == 0 { 1.0 } else { rng.int_in(1, top) as f64 }))
                        .collect()
                })
                .collect()
        }
        _ => {
            let counts = sample_counts(&potentials, n_steps, n_states, population, seed);
            let mut rng = SeededRng::new(seed, NOISE_STREAM);
            let sd = noise_var.sqrt();
            counts
                .iter()
                .map(|row| row.iter().map(|&c| Some((c as f64 + sd * rng.normal()).max(0.0))).collect())
                .collect()
        }
    };
    CgmInstance::new(
        n_steps,
        n_states,
        population,
        potentials,
        observations,
        vec![vec![NoiseModel::Gaussian { var: noise_var }; n_states]; n_steps],
    )
}

/// Node counts of `population` independent paths drawn from the chain whose
/// path weight is the product of the potentials.
fn sample_counts(
    potentials: &[Vec<Vec<f64>>],
    n_steps: usize,
    n_states: usize,
    population: u64,
    seed: u64,
) -> Vec<Vec<u64>> {
    let r = n_states;
    // backward messages, normalized per step
    let mut beta = vec![vec![1.0; r]; n_steps];
    for t in (0..n_steps - 1).rev() {
        for i in 0..r {
            beta[t][i] = (0..r).map(|j| potentials[t][i][j] * beta[t + 1][j]).sum();
        }
        let total: f64 = beta[t].iter().sum();
        beta[t].iter_mut().for_each(|b| *b /= total);
    }
    let mut rng = SeededRng::new(seed, TRAJECTORY_STREAM);
    let mut counts = vec![vec![0u64; r]; n_steps];
    for _ in 0..population {
        let mut state = rng.weighted(&beta[0]);
        counts[0][state] += 1;
        for t in 0..n_steps - 1 {
            let weights: Vec<f64> = (0..r).map(|j| potentials[t][state][j] * beta[t + 1][j]).collect();
            state = rng.weighted(&weights);
            counts[t + 1][state] += 1;
        }
    }
    counts
}

/// Histogram interpolation between `eta_first` and `eta_last` on a grid:
/// Gaussian observations with variance `1 / (2 precision)` at the first and
/// last steps, nothing in between, and `phi = exp(-d^2)`.
pub fn gen_interpolation(
    grid: Grid,
    eta_first: &[u64],
    eta_last: &[u64],
    n_steps: usize,
    noise_precision: f64,
) -> Result<CgmInstance> {
    let r = grid.cells();
    if n_steps < 2 {
        return Err(Error::InvalidInstance(format!("interpolation needs N >= 2, got {n_steps}")));
    }
    if eta_first.len() != r || eta_last.len() != r {
        return Err(Error::ShapeMismatch(format!(
            "histograms have {} and {} cells, grid has {r}",
            eta_first.len(),
            eta_last.len()
        )));
    }
    let m: u64 = eta_first.iter().sum();
    let m_last: u64 = eta_last.iter().sum();
    if m != m_last {
        return Err(Error::InvalidInstance(format!("histogram sums differ: {m} vs {m_last}")));
    }
    if !(noise_precision.is_finite() && noise_precision > 0.0) {
        return Err(Error::InvalidInstance(format!("noise precision {noise_precision} is not positive")));
    }
    let var = 1.0 / (2.0 * noise_precision);
    let potentials = PotentialKind::GridGaussian { grid }.potentials(n_steps, r, &mut SeededRng::new(0, 0));
    let mut observations = vec![vec![None; r]; n_steps];
    let mut noise = vec![vec![NoiseModel::Missing; r]; n_steps];
    for (t, eta) in [(0, eta_first), (n_steps - 1, eta_last)] {
        observations[t] = eta.iter().map(|&v| Some(v as f64)).collect();
        noise[t] = vec![NoiseModel::Gaussian { var }; r];
    }
    CgmInstance::new(n_steps, r, m, potentials, observations, noise)
}

/// Bounds for [`gen_random`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomLimits {
    pub max_steps: usize,
    pub max_states: usize,
    pub max_population: u64,
}

/// Small instance with mixed potentials and mixed noise, for cross-checks.
///
/// Draws `N` in `min(2, max_steps)..=max_steps`, `R` in `1..=max_states` and
/// `M` in `1..=max_population`. Potentials are uniform integers, the
/// distance form, or log-uniform reals in `[e^-2, e^2]`. Each cell is
/// missing, Gaussian or Poisson; at most `M` Poisson cells per step carry a
/// positive count, so a feasible table with finite cost always exists.
pub fn gen_random(limits: RandomLimits, seed: u64) -> Result<CgmInstance> {
    check_dims(limits.max_steps, limits.max_states)?;
    if limits.max_population == 0 {
        return Err(Error::InvalidInstance("max_population must be positive".into()));
    }
    let mut rng = SeededRng::new(seed, OBSERVATION_STREAM);
    let n = rng.int_in(limits.max_steps.min(2) as u64, limits.max_steps as u64) as usize;
    let r = rng.int_in(1, limits.max_states as u64) as usize;
    let m = rng.int_in(1, limits.max_population);

    let mut prng = SeededRng::new(seed, POTENTIAL_STREAM);
    let potentials = match rng.index(3) {
        0 => PotentialKind::Uniform.potentials(n, r, &mut prng),
        1 => PotentialKind::Distance1D.potentials(n, r, &mut prng),
        _ => (0..n - 1)
            .map(|_| (0..r).map(|_| (0..r).map(|_| (4.0 * prng.unit() - 2.0).exp()).collect()).collect())
            .collect(),
    };

    let mut observations = vec![vec![None; r]; n];
    let mut noise = vec![vec![NoiseModel::Missing; r]; n];
    for t in 0..n {
        let mut occupied = 0;
        for i in 0..r {
            match rng.index(3) {
                0 => {}
                1 => {
                    let var = [0.5, 1.0, 2.0, 5.0][rng.index(4)];
                    let y = (rng.unit() * 1.25 * m as f64 * 100.0).round() / 100.0;
                    observations[t][i] = Some(y);
                    noise[t][i] = NoiseModel::Gaussian { var };
                }
                _ => {
                    let mut y = rng.int_in(0, m);
                    if y > 0 && occupied == m {
                        y = 0;
                    }
                    if y > 0 {
                        occupied += 1;
                    }
                    observations[t][i] = Some(y as f64);
                    noise[t][i] = NoiseModel::Poisson;
                }
            }
        }
    }
    CgmInstance::new(n, r, m, potentials, observations, noise)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_uniform_ranges() {
        let inst = gen_synthetic(5, 10, 100, PotentialKind::Uniform, 50.0, 11).unwrap();
        assert_eq!(inst.potentials().len(), 4);
        for v in inst.potentials().iter().flatten().flatten() {
            assert!(v.fract() == 0.0 && (1.0..=10.0).contains(v));
        }
        for t in 0..5 {
            for i in 0..10 {
                let y = inst.observation(t, i);
                assert!(y.fract() == 0.0 && (1.0..=20.0).contains(&y));
                assert_eq!(inst.noise(t, i), NoiseModel::Gaussian { var: 50.0 });
            }
        }
    }

    #[test]
    fn same_seed_same_instance() {
        for kind in [
            PotentialKind::Uniform,
            PotentialKind::Distance1D,
            PotentialKind::GridInverseDistance { grid: Grid::new(3, 2).unwrap() },
        ] {
            let a = gen_synthetic(4, 6, 30, kind, 2.0, 5).unwrap();
            let b = gen_synthetic(4, 6, 30, kind, 2.0, 5).unwrap();
            assert_eq!(a, b);
        }
        assert_ne!(
            gen_synthetic(4, 6, 30, PotentialKind::Uniform, 2.0, 5).unwrap(),
            gen_synthetic(4, 6, 30, PotentialKind::Uniform, 2.0, 6).unwrap()
        );
    }

    #[test]
    fn distance_potential_values() {
        let inst = gen_synthetic(2, 4, 8, PotentialKind::Distance1D, 1.0, 0).unwrap();
        let phi = &inst.potentials()[0];
        assert_eq!(phi[2][2], 1.0);
        assert_eq!(phi[0][3], 0.25);
        assert_eq!(phi[3][1], 1.0 / 3.0);
    }

    #[test]
    fn small_population_observes_ones() {
        let inst = gen_synthetic(3, 10, 5, PotentialKind::Uniform, 50.0, 1).unwrap();
        assert!((0..3).all(|t| (0..10).all(|i| inst.observation(t, i) == 1.0)));
    }

    #[test]
    fn grid_kinds_need_matching_size() {
        let grid = Grid::new(2, 2).unwrap();
        assert!(gen_synthetic(3, 5, 10, PotentialKind::GridGaussian { grid }, 1.0, 0).is_err());
        let inst = gen_synthetic(3, 4, 10, PotentialKind::GridGaussian { grid }, 1.0, 0).unwrap();
        assert!((inst.potentials()[0][0][3] - (-2f64).exp()).abs() < 1e-15);
        assert!((0..3).all(|t| (0..4).all(|i| inst.observation(t, i) >= 0.0)));
    }

    #[test]
    fn interpolation_instance_shape() {
        let grid = Grid::new(5, 5).unwrap();
        let mut first = vec![0; 25];
        let mut last = vec![0; 25];
        first[0] = 5;
        last[24] = 5;
        let inst = gen_interpolation(grid, &first, &last, 6, 5.0).unwrap();
        assert_eq!((inst.n_steps(), inst.n_states(), inst.population()), (6, 25, 5));
        assert_eq!(inst.noise(0, 0), NoiseModel::Gaussian { var: 0.1 });
        assert!((1..5).all(|t| (0..25).all(|i| inst.noise(t, i).is_missing())));
        last[24] = 4;
        assert!(gen_interpolation(grid, &first, &last, 6, 5.0).is_err());
    }

    #[test]
    fn random_instances_respect_limits() {
        let limits = RandomLimits { max_steps: 3, max_states: 3, max_population: 5 };
        for seed in 0..200 {
            let inst = gen_random(limits, seed).unwrap();
            assert!((2..=3).contains(&inst.n_steps()));
            assert!((1..=3).contains(&inst.n_states()));
            assert!((1..=5).contains(&inst.population()));
            for t in 0..inst.n_steps() {
                let forced = (0..inst.n_states())
                    .filter(|&i| inst.noise(t, i) == NoiseModel::Poisson && inst.observation(t, i) > 0.0)
                    .count() as u64;
                assert!(forced <= inst.population());
            }
        }
    }
}
