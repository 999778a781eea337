//! Exact MAP inference for collective graphical models on path graphs.
//!
//! The MAP problem over integer contingency tables is a minimum-cost flow
//! problem on a layered network whose interior node costs are not convex.
//! [`dca`] minimizes it by repeatedly replacing the concave part with a
//! tangent and solving the resulting convex-cost flow exactly ([`flow`]).
//! [`baseline`] solves the Stirling-approximated continuous relaxation for
//! comparison, and [`oracle`] provides exhaustive ground truth on tiny
//! instances.

pub mod baseline;
pub mod dca;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod instances;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
