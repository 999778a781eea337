//! Problem data, cost terms and the MAP objective.

mod instance;
pub mod logfact;
mod objective;
mod tables;

pub use instance::{g_cost, CgmInstance, NoiseModel};
pub use logfact::{log_factorial, log_factorial_interp};
pub use objective::{approx_objective, objective, objective_fractional};
pub use tables::{validate_tables, ContingencyTables, FractionalTables, Violation};
