use crate::error::{Error, Result};
use crate::model::logfact::log_factorial;

/// Observation noise attached to one node cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseModel {
    /// `p(y | n) ∝ exp(-(y - n)^2 / (2 var))`; the normalizer is dropped.
    Gaussian { var: f64 },
    /// `p(y | n) = n^y e^{-n} / y!`. Requires integer `y`.
    Poisson,
    /// No observation; contributes nothing.
    Missing,
}

impl NoiseModel {
    /// Negative log-likelihood at an integer count. May be `+inf`.
    pub fn nll(&self, y: f64, z: u64) -> f64 {
        self.nll_real(y, z as f64)
    }

    /// Negative log-likelihood at a real count `z >= 0`.
    pub fn nll_real(&self, y: f64, z: f64) -> f64 {
        match *self {
            NoiseModel::Gaussian { var } => {
                let d = y - z;
                d * d / (2.0 * var)
            }
            NoiseModel::Poisson => {
                let lf = log_factorial(y as u64);
                if z <= 0.0 {
                    if y > 0.0 {
                        f64::INFINITY
                    } else {
                        lf
                    }
                } else {
                    -y * z.ln() + z + lf
                }
            }
            NoiseModel::Missing => 0.0,
        }
    }

    /// `nll(z + 1) - nll(z)`, computed without cancellation.
    ///
    /// Returns `-inf` when `nll(z)` is infinite and `nll(z + 1)` is not.
    pub fn nll_increment(&self, y: f64, z: u64) -> f64 {
        match *self {
            NoiseModel::Gaussian { var } => (2.0 * (z as f64 - y) + 1.0) / (2.0 * var),
            NoiseModel::Poisson => {
                if z == 0 {
                    if y > 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        1.0
                    }
                } else {
                    1.0 - y * (1.0 / z as f64).ln_1p()
                }
            }
            NoiseModel::Missing => 0.0,
        }
    }

    /// Derivative of [`NoiseModel::nll_real`] in `z`, with `z` floored at `floor`.
    pub fn nll_derivative(&self, y: f64, z: f64, floor: f64) -> f64 {
        match *self {
            NoiseModel::Gaussian { var } => (z - y) / var,
            NoiseModel::Poisson => 1.0 - y / z.max(floor),
            NoiseModel::Missing => 0.0,
        }
    }

    /// Smallest count with finite negative log-likelihood.
    pub fn domain_start(&self, y: f64) -> u64 {
        match self {
            NoiseModel::Poisson if y > 0.0 => 1,
            _ => 0,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, NoiseModel::Missing)
    }
}

/// A MAP-inference problem for a collective graphical model on a path.
///
/// Indices are zero-based: steps `t in 0..n_steps`, states `i in 0..n_states`,
/// transitions `t in 0..n_steps - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct CgmInstance {
    n_steps: usize,
    n_states: usize,
    population: u64,
    potentials: Vec<Vec<Vec<f64>>>,
    log_potentials: Vec<Vec<Vec<f64>>>,
    observations: Vec<Vec<Option<f64>>>,
    noise: Vec<Vec<NoiseModel>>,
}

impl CgmInstance {
    pub fn new(
        n_steps: usize,
        n_states: usize,
        population: u64,
        potentials: Vec<Vec<Vec<f64>>>,
        observations: Vec<Vec<Option<f64>>>,
        noise: Vec<Vec<NoiseModel>>,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidInstance(msg));
        if n_steps == 0 {
            return invalid("n_steps must be positive".into());
        }
        if n_states == 0 {
            return invalid("n_states must be positive".into());
        }
        if potentials.len() != n_steps - 1 {
            return invalid(format!(
                "expected {} potential matrices, found {}",
                n_steps - 1,
                potentials.len()
            ));
        }
        for (t, mat) in potentials.iter().enumerate() {
            if mat.len() != n_states || mat.iter().any(|row| row.len() != n_states) {
                return invalid(format!("potential matrix {t} is not {n_states}x{n_states}"));
            }
            for (i, row) in mat.iter().enumerate() {
                for (j, &phi) in row.iter().enumerate() {
                    if !(phi.is_finite() && phi > 0.0) {
                        return invalid(format!("potential[{t}][{i}][{j}] = {phi} is not positive"));
                    }
                }
            }
        }
        if observations.len() != n_steps || observations.iter().any(|r| r.len() != n_states) {
            return invalid(format!("observations must be {n_steps}x{n_states}"));
        }
        if noise.len() != n_steps || noise.iter().any(|r| r.len() != n_states) {
            return invalid(format!("noise must be {n_steps}x{n_states}"));
        }
        for t in 0..n_steps {
            for i in 0..n_states {
                let obs = observations[t][i];
                let model = noise[t][i];
                match (obs, model) {
                    (None, NoiseModel::Missing) => {}
                    (None, _) | (Some(_), NoiseModel::Missing) => {
                        return invalid(format!(
                            "observation and noise at ({t}, {i}) disagree on missingness"
                        ));
                    }
                    (Some(y), m) => {
                        if !(y.is_finite() && y >= 0.0) {
                            return invalid(format!("observation ({t}, {i}) = {y} is not a nonnegative real"));
                        }
                        match m {
                            NoiseModel::Gaussian { var } if !(var.is_finite() && var > 0.0) => {
                                return invalid(format!("variance at ({t}, {i}) = {var} is not positive"));
                            }
                            NoiseModel::Poisson if y.fract() != 0.0 => {
                                return invalid(format!(
                                    "Poisson observation ({t}, {i}) = {y} is not an integer"
                                ));
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        let log_potentials = potentials
            .iter()
            .map(|m| m.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect())
            .collect();
        Ok(Self {
            n_steps,
            n_states,
            population,
            potentials,
            log_potentials,
            observations,
            noise,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    pub fn potentials(&self) -> &[Vec<Vec<f64>>] {
        &self.potentials
    }

    pub fn observations(&self) -> &[Vec<Option<f64>>] {
        &self.observations
    }

    pub fn noise_models(&self) -> &[Vec<NoiseModel>] {
        &self.noise
    }

    #[inline]
    pub fn log_potential(&self, t: usize, i: usize, j: usize) -> f64 {
        self.log_potentials[t][i][j]
    }

    #[inline]
    pub fn noise(&self, t: usize, i: usize) -> NoiseModel {
        self.noise[t][i]
    }

    /// Observed value, or `0.0` for missing cells (where it is never read).
    #[inline]
    pub fn observation(&self, t: usize, i: usize) -> f64 {
        self.observations[t][i].unwrap_or(0.0)
    }

    fn check_transition(&self, t: usize, i: usize, j: usize) -> Result<()> {
        if t + 1 >= self.n_steps || i >= self.n_states || j >= self.n_states {
            return Err(Error::IndexOutOfRange(format!(
                "transition ({t}, {i}, {j}) for N = {}, R = {}",
                self.n_steps, self.n_states
            )));
        }
        Ok(())
    }

    fn check_node(&self, t: usize, i: usize) -> Result<()> {
        if t >= self.n_steps || i >= self.n_states {
            return Err(Error::IndexOutOfRange(format!(
                "node ({t}, {i}) for N = {}, R = {}",
                self.n_steps, self.n_states
            )));
        }
        Ok(())
    }

    /// `f_tij(z) = ln z! - z ln phi_tij`.
    pub fn f_cost(&self, t: usize, i: usize, j: usize, z: u64) -> Result<f64> {
        self.check_transition(t, i, j)?;
        Ok(self.f_value(t, i, j, z))
    }

    /// `h_ti(z) = -ln p_ti(y_ti | z)`, possibly `+inf`.
    pub fn h_cost(&self, t: usize, i: usize, z: u64) -> Result<f64> {
        self.check_node(t, i)?;
        Ok(self.h_value(t, i, z))
    }

    #[inline]
    pub(crate) fn f_value(&self, t: usize, i: usize, j: usize, z: u64) -> f64 {
        log_factorial(z) - z as f64 * self.log_potentials[t][i][j]
    }

    #[inline]
    pub(crate) fn h_value(&self, t: usize, i: usize, z: u64) -> f64 {
        self.noise[t][i].nll(self.observation(t, i), z)
    }

    /// True when node `t` carries a `g` term (interior steps only).
    #[inline]
    pub fn is_interior(&self, t: usize) -> bool {
        t > 0 && t + 1 < self.n_steps
    }
}

/// `g(z) = -ln z!`.
pub fn g_cost(z: u64) -> f64 {
    -log_factorial(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn single(noise: NoiseModel, y: Option<f64>, phi: f64) -> CgmInstance {
        CgmInstance::new(
            2,
            1,
            2,
            vec![vec![vec![phi]]],
            vec![vec![y], vec![y]],
            vec![vec![noise], vec![noise]],
        )
        .unwrap()
    }

    #[test]
    fn f_cost_examples() {
        let inst = single(NoiseModel::Missing, None, 1.0);
        assert!((inst.f_cost(0, 0, 0, 3).unwrap() - 6f64.ln()).abs() < 1e-12);
        assert!((inst.f_cost(0, 0, 0, 3).unwrap() - 1.791759).abs() < 1e-6);
        let inst = single(NoiseModel::Missing, None, 7.3);
        assert_eq!(inst.f_cost(0, 0, 0, 0).unwrap(), 0.0);
        let inst = single(NoiseModel::Missing, None, std::f64::consts::E);
        assert!((inst.f_cost(0, 0, 0, 1).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(inst.f_cost(1, 0, 0, 1), Err(Error::IndexOutOfRange(_))));
        assert!(matches!(inst.f_cost(0, 1, 0, 1), Err(Error::IndexOutOfRange(_))));
    }

    #[test]
    fn g_cost_examples() {
        assert_eq!(g_cost(0), 0.0);
        assert!((g_cost(2) + 0.693147).abs() < 1e-6);
        assert!((g_cost(4) + 3.178054).abs() < 1e-6);
    }

    #[test]
    fn h_cost_examples() {
        let inst = single(NoiseModel::Gaussian { var: 50.0 }, Some(3.0), 1.0);
        assert_eq!(inst.h_cost(0, 0, 3).unwrap(), 0.0);
        let inst = single(NoiseModel::Poisson, Some(2.0), 1.0);
        assert_eq!(inst.h_cost(0, 0, 0).unwrap(), f64::INFINITY);
        let inst = single(NoiseModel::Poisson, Some(0.0), 1.0);
        assert!((inst.h_cost(0, 0, 3).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(inst.h_cost(0, 0, 0).unwrap(), 0.0);
        let inst = single(NoiseModel::Missing, None, 1.0);
        assert_eq!(inst.h_cost(1, 0, 17).unwrap(), 0.0);
        assert!(inst.h_cost(2, 0, 0).is_err());
    }

    #[test]
    fn increments_match_differences() {
        let cases = [
            (NoiseModel::Gaussian { var: 0.7 }, 3.4),
            (NoiseModel::Poisson, 5.0),
            (NoiseModel::Poisson, 0.0),
            (NoiseModel::Missing, 0.0),
        ];
        for (model, y) in cases {
            for z in model.domain_start(y)..40 {
                let diff = model.nll(y, z + 1) - model.nll(y, z);
                assert!((model.nll_increment(y, z) - diff).abs() < 1e-9, "{model:?} z={z}");
            }
        }
        assert_eq!(NoiseModel::Poisson.nll_increment(2.0, 0), f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_invalid_instances() {
        let obs = vec![vec![Some(1.0)], vec![Some(1.0)]];
        let gauss = vec![vec![NoiseModel::Gaussian { var: 1.0 }]; 2];
        assert!(CgmInstance::new(2, 1, 1, vec![vec![vec![0.0]]], obs.clone(), gauss.clone()).is_err());
        assert!(CgmInstance::new(2, 1, 1, vec![vec![vec![1.0]]], obs.clone(), vec![vec![NoiseModel::Gaussian { var: 0.0 }]; 2]).is_err());
        assert!(CgmInstance::new(2, 1, 1, vec![vec![vec![1.0]]], vec![vec![None]; 2], gauss.clone()).is_err());
        assert!(CgmInstance::new(2, 1, 1, vec![vec![vec![1.0]]], vec![vec![Some(1.5)]; 2], vec![vec![NoiseModel::Poisson]; 2]).is_err());
        assert!(CgmInstance::new(0, 1, 1, vec![], vec![], vec![]).is_err());
        assert!(CgmInstance::new(2, 1, 1, vec![vec![vec![1.0]]], obs, gauss).is_ok());
    }
}
