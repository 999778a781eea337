//! Instance generators, the sparsity statistic and file formats.

mod generate;
pub mod io;
pub mod rng;

pub use generate::{gen_interpolation, gen_random, gen_synthetic, Grid, PotentialKind, RandomLimits};
pub use io::{
    load_fractional_tables, load_instance, load_tables, save_fractional_tables, save_instance, save_tables,
};

use crate::model::{ContingencyTables, FractionalTables};

/// Tables whose edge entries can be read as reals.
pub trait EdgeEntries {
    fn edge_entries(&self) -> Vec<f64>;
}

impl EdgeEntries for FractionalTables {
    fn edge_entries(&self) -> Vec<f64> {
        self.edge.iter().flatten().flatten().copied().collect()
    }
}

impl EdgeEntries for ContingencyTables {
    fn edge_entries(&self) -> Vec<f64> {
        self.edge.iter().flatten().flatten().map(|&v| v as f64).collect()
    }
}

/// Fraction of edge-table entries not above `threshold`; 1 for tables with
/// no edge entries.
pub fn sparsity<T: EdgeEntries + ?Sized>(tables: &T, threshold: f64) -> f64 {
    let entries = tables.edge_entries();
    if entries.is_empty() {
        return 1.0;
    }
    let nonzero = entries.iter().filter(|&&v| v > threshold).count();
    1.0 - nonzero as f64 / entries.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity(&ContingencyTables::zeros(3, 4), 1e-2), 1.0);
        let dense = FractionalTables { node: vec![vec![1.0; 2]; 2], edge: vec![vec![vec![0.5; 2]; 2]] };
        assert_eq!(sparsity(&dense, 1e-2), 0.0);
        let mixed = FractionalTables {
            node: vec![vec![1.0; 2]; 2],
            edge: vec![vec![vec![0.5, 0.01], vec![0.009, 2.0]]],
        };
        assert_eq!(sparsity(&mixed, 1e-2), 0.5);
    }
}
