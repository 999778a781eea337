use crate::error::Result;
use crate::model::logfact::{log_factorial_interp, stirling};
use crate::model::{CgmInstance, ContingencyTables, FractionalTables};

/// Sums the transition, interior-node and observation terms of the MAP
/// objective over real-valued tables, with `ln z!` supplied by `log_fact`.
fn sum_terms(instance: &CgmInstance, tables: &FractionalTables, log_fact: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    for (t, mat) in tables.edge.iter().enumerate() {
        for (i, row) in mat.iter().enumerate() {
            for (j, &z) in row.iter().enumerate() {
                total += log_fact(z) - z * instance.log_potential(t, i, j);
            }
        }
    }
    for (t, row) in tables.node.iter().enumerate() {
        let interior = instance.is_interior(t);
        for (i, &z) in row.iter().enumerate() {
            if interior {
                total -= log_fact(z);
            }
            total += instance.noise(t, i).nll_real(instance.observation(t, i), z);
        }
    }
    total
}

/// The MAP objective `P(n)` (up to the dropped constants). May be `+inf`.
///
/// Feasibility is not checked; see [`crate::model::validate_tables`].
pub fn objective(instance: &CgmInstance, tables: &ContingencyTables) -> Result<f64> {
    tables.check_shape(instance)?;
    Ok(sum_terms(instance, &tables.to_fractional(), log_factorial_interp))
}

/// [`objective`] on real-valued tables, with `ln z!` linearly interpolated
/// between `ln(floor(z)!)` and `ln(ceil(z)!)`.
pub fn objective_fractional(instance: &CgmInstance, tables: &FractionalTables) -> Result<f64> {
    tables.check_shape(instance)?;
    tables.check_nonnegative()?;
    Ok(sum_terms(instance, tables, log_factorial_interp))
}

/// The MAP objective with every `ln z!` replaced by Stirling's `z ln z - z`.
pub fn approx_objective(instance: &CgmInstance, tables: &FractionalTables) -> Result<f64> {
    tables.check_shape(instance)?;
    tables.check_nonnegative()?;
    Ok(sum_terms(instance, tables, stirling))
}
