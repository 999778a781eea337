use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CgmInstance;

/// Integer node and edge count tables.
///
/// `node[t][i]` counts individuals in state `i` at step `t`; `edge[t][i][j]`
/// counts transitions `i -> j` between steps `t` and `t + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContingencyTables {
    pub node: Vec<Vec<u64>>,
    pub edge: Vec<Vec<Vec<u64>>>,
}

/// Real-valued relaxation of [`ContingencyTables`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionalTables {
    pub node: Vec<Vec<f64>>,
    pub edge: Vec<Vec<Vec<f64>>>,
}

fn check_shape<T>(node: &[Vec<T>], edge: &[Vec<Vec<T>>], n_steps: usize, n_states: usize) -> Result<()> {
    let ok = node.len() == n_steps
        && node.iter().all(|r| r.len() == n_states)
        && edge.len() == n_steps.saturating_sub(1)
        && edge
            .iter()
            .all(|m| m.len() == n_states && m.iter().all(|r| r.len() == n_states));
    if ok {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "tables do not have shape N = {n_steps}, R = {n_states}"
        )))
    }
}

impl ContingencyTables {
    pub fn zeros(n_steps: usize, n_states: usize) -> Self {
        Self {
            node: vec![vec![0; n_states]; n_steps],
            edge: vec![vec![vec![0; n_states]; n_states]; n_steps.saturating_sub(1)],
        }
    }

    pub fn zeros_like(instance: &CgmInstance) -> Self {
        Self::zeros(instance.n_steps(), instance.n_states())
    }

    pub fn check_shape(&self, instance: &CgmInstance) -> Result<()> {
        check_shape(&self.node, &self.edge, instance.n_steps(), instance.n_states())
    }

    pub fn to_fractional(&self) -> FractionalTables {
        FractionalTables {
            node: self.node.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect(),
            edge: self
                .edge
                .iter()
                .map(|m| m.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect())
                .collect(),
        }
    }
}

impl FractionalTables {
    pub fn check_shape(&self, instance: &CgmInstance) -> Result<()> {
        check_shape(&self.node, &self.edge, instance.n_steps(), instance.n_states())
    }

    /// Fails on the first negative or non-finite entry.
    pub fn check_nonnegative(&self) -> Result<()> {
        for (t, row) in self.node.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::NegativeEntry { location: format!("node[{t}][{i}]"), value: v });
                }
            }
        }
        for (t, mat) in self.edge.iter().enumerate() {
            for (i, row) in mat.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(Error::NegativeEntry {
                            location: format!("edge[{t}][{i}][{j}]"),
                            value: v,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// True when every entry is within `tol` of an integer.
    pub fn is_integral(&self, tol: f64) -> bool {
        let near = |v: &f64| (v - v.round()).abs() <= tol;
        self.node.iter().flatten().all(near) && self.edge.iter().flatten().flatten().all(near)
    }

    /// Largest absolute violation of the population and marginal equalities.
    pub fn max_marginal_residual(&self, population: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.node {
            worst = worst.max((row.iter().sum::<f64>() - population).abs());
        }
        for (t, mat) in self.edge.iter().enumerate() {
            for (i, row) in mat.iter().enumerate() {
                worst = worst.max((row.iter().sum::<f64>() - self.node[t][i]).abs());
            }
            for j in 0..mat.len() {
                let col: f64 = mat.iter().map(|r| r[j]).sum();
                worst = worst.max((col - self.node[t + 1][j]).abs());
            }
        }
        worst
    }
}

/// One violated constraint of the feasible table set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// `sum_i node[t][i] != M`.
    Population { t: usize, sum: u64, expected: u64 },
    /// `sum_j edge[t][i][j] != node[t][i]`.
    OutMarginal { t: usize, i: usize, sum: u64, node: u64 },
    /// `sum_i edge[t][i][j] != node[t + 1][j]`.
    InMarginal { t: usize, j: usize, sum: u64, node: u64 },
}

/// Checks integer tables against the population and marginal equalities.
///
/// Returns an empty list for feasible tables.
pub fn validate_tables(instance: &CgmInstance, tables: &ContingencyTables) -> Result<Vec<Violation>> {
    tables.check_shape(instance)?;
    let m = instance.population();
    let r = instance.n_states();
    let mut out = Vec::new();
    for (t, row) in tables.node.iter().enumerate() {
        let sum: u64 = row.iter().sum();
        if sum != m {
            out.push(Violation::Population { t, sum, expected: m });
        }
    }
    for (t, mat) in tables.edge.iter().enumerate() {
        for (i, row) in mat.iter().enumerate() {
            let sum: u64 = row.iter().sum();
            if sum != tables.node[t][i] {
                out.push(Violation::OutMarginal { t, i, sum, node: tables.node[t][i] });
            }
        }
        for j in 0..r {
            let sum: u64 = mat.iter().map(|row| row[j]).sum();
            if sum != tables.node[t + 1][j] {
                out.push(Violation::InMarginal { t, j, sum, node: tables.node[t + 1][j] });
            }
        }
    }
    Ok(out)
}
