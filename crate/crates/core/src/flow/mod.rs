//! Minimum convex-cost flow: the layered network of a path-graph instance,
//! exact solvers, and the table/flow correspondence.

mod cost;
mod network;
mod residual;
mod solve;

pub use cost::{ConcavePart, CostHandle};
pub use network::{
    build_flow_network, build_linear_network, build_surrogate_network, extract_tables, flow_from_tables, Flow,
    FlowEdge, FlowNetwork, Layout, NodeLabel,
};
pub use solve::{
    solve, solve_capacity_scaling, solve_capacity_scaling_with, solve_linear, solve_ssp, solve_ssp_with,
    InnerSolver, SolveOptions, SolveStats,
};
