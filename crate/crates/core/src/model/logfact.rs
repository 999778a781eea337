//! Memoized `ln(z!)`.
//!
//! Values come from a process-wide table of compensated partial sums of
//! `ln k`. The table only grows; readers never observe a partially written
//! prefix.

use std::sync::RwLock;

struct Table {
    values: Vec<f64>,
    sum: f64,
    compensation: f64,
}

static TABLE: RwLock<Table> = RwLock::new(Table {
    values: Vec::new(),
    sum: 0.0,
    compensation: 0.0,
});

const MIN_TABLE_LEN: usize = 1024;

fn grow(table: &mut Table, len: usize) {
    if table.values.is_empty() {
        table.values.push(0.0);
    }
    table.values.reserve(len.saturating_sub(table.values.len()));
    while table.values.len() < len {
        let k = table.values.len() as f64;
        let term = k.ln();
        // Neumaier summation keeps the absolute error near one ulp of the result.
        let t = table.sum + term;
        if table.sum.abs() >= term.abs() {
            table.compensation += (table.sum - t) + term;
        } else {
            table.compensation += (term - t) + table.sum;
        }
        table.sum = t;
        table.values.push(table.sum + table.compensation);
    }
}

/// Ensures `ln(z!)` is tabulated for every `z <= max_z`.
pub fn reserve(max_z: u64) {
    let needed = max_z as usize + 1;
    if TABLE.read().expect("log-factorial table poisoned").values.len() >= needed {
        return;
    }
    let mut table = TABLE.write().expect("log-factorial table poisoned");
    let target = needed.max(MIN_TABLE_LEN).max(table.values.len() * 2);
    grow(&mut table, target);
}

/// `ln(z!)`.
pub fn log_factorial(z: u64) -> f64 {
    {
        let table = TABLE.read().expect("log-factorial table poisoned");
        if let Some(v) = table.values.get(z as usize) {
            return *v;
        }
    }
    reserve(z);
    TABLE.read().expect("log-factorial table poisoned").values[z as usize]
}

/// Piecewise-linear interpolation of `ln(z!)` between neighbouring integers.
///
/// Coincides with [`log_factorial`] at integer arguments.
pub fn log_factorial_interp(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    let lo = z.floor();
    let frac = z - lo;
    let lo_val = log_factorial(lo as u64);
    if frac == 0.0 {
        return lo_val;
    }
    let hi_val = log_factorial(lo as u64 + 1);
    (1.0 - frac) * lo_val + frac * hi_val
}

/// Stirling's approximation `z ln z - z` with `0 ln 0 = 0`.
pub fn stirling(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        z * z.ln() - z
    }
}
