use serde::Serialize;

use crate::dca::{alpha_value, AlphaStrategy};
use crate::error::{Error, Result};
use crate::flow::cost::{ConcavePart, CostHandle};
use crate::model::{CgmInstance, ContingencyTables};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NodeLabel {
    Source,
    Sink,
    U { t: usize, i: usize },
    W { t: usize, i: usize },
    Other(usize),
}

impl NodeLabel {
    /// Names used in debug dumps: `o`, `d`, `u_t_i`, `w_t_i` (one-based `t`, `i`).
    pub fn name(&self) -> String {
        match *self {
            NodeLabel::Source => "o".into(),
            NodeLabel::Sink => "d".into(),
            NodeLabel::U { t, i } => format!("u_{}_{}", t + 1, i + 1),
            NodeLabel::W { t, i } => format!("w_{}_{}", t + 1, i + 1),
            NodeLabel::Other(k) => format!("v{k}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowEdge {
    pub tail: usize,
    pub head: usize,
    pub capacity: u64,
    pub cost: CostHandle,
}

/// Index arithmetic for networks built from a path-graph instance.
///
/// Nodes: `o = 0`, `d = 1`, `u_{t,i} = 2 + 2(tR + i)`, `w_{t,i} = u_{t,i} + 1`.
/// Edges: `R` source edges, `R` sink edges, `NR` node edges `(u_{t,i}, w_{t,i})`
/// in `(t, i)` order, then `(N-1)R^2` transition edges `(w_{t,i}, u_{t+1,j})`
/// in `(t, i, j)` order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n_steps: usize,
    pub n_states: usize,
}

impl Layout {
    pub fn u(&self, t: usize, i: usize) -> usize {
        2 + 2 * (t * self.n_states + i)
    }

    pub fn w(&self, t: usize, i: usize) -> usize {
        self.u(t, i) + 1
    }

    pub fn node_count(&self) -> usize {
        2 + 2 * self.n_steps * self.n_states
    }

    pub fn edge_count(&self) -> usize {
        let (n, r) = (self.n_steps, self.n_states);
        2 * r + n * r + n.saturating_sub(1) * r * r
    }

    pub fn source_edge(&self, i: usize) -> usize {
        i
    }

    pub fn sink_edge(&self, i: usize) -> usize {
        self.n_states + i
    }

    pub fn node_edge(&self, t: usize, i: usize) -> usize {
        2 * self.n_states + t * self.n_states + i
    }

    pub fn transition_edge(&self, t: usize, i: usize, j: usize) -> usize {
        let r = self.n_states;
        2 * r + self.n_steps * r + (t * r + i) * r + j
    }
}

/// Directed network with integer supplies and per-edge cost functions.
#[derive(Clone, Debug)]
pub struct FlowNetwork {
    labels: Vec<NodeLabel>,
    edges: Vec<FlowEdge>,
    supplies: Vec<i64>,
    layout: Option<Layout>,
}

impl FlowNetwork {
    /// An empty network on `supplies.len()` unlabeled nodes.
    pub fn new(supplies: Vec<i64>) -> Self {
        Self {
            labels: (0..supplies.len()).map(NodeLabel::Other).collect(),
            edges: Vec::new(),
            supplies,
            layout: None,
        }
    }

    pub fn add_edge(&mut self, tail: usize, head: usize, capacity: u64, cost: CostHandle) -> usize {
        assert!(tail < self.supplies.len() && head < self.supplies.len());
        self.edges.push(FlowEdge { tail, head, capacity, cost });
        self.edges.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.supplies.len()
    }

    pub fn edges(&self) -> &[FlowEdge] {
        &self.edges
    }

    pub fn supplies(&self) -> &[i64] {
        &self.supplies
    }

    pub fn labels(&self) -> &[NodeLabel] {
        &self.labels
    }

    pub fn layout(&self) -> Option<Layout> {
        self.layout
    }

    /// Replaces the cost of edge `e`.
    pub fn set_cost(&mut self, e: usize, cost: CostHandle) {
        self.edges[e].cost = cost;
    }

    /// Graphviz rendering for debugging.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph flow {\n");
        for (v, label) in self.labels.iter().enumerate() {
            out.push_str(&format!("  \"{}\" [label=\"{} (b={})\"];\n", label.name(), label.name(), self.supplies[v]));
        }
        for (k, e) in self.edges.iter().enumerate() {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"e{} cap={} {:?}\"];\n",
                self.labels[e.tail].name(),
                self.labels[e.head].name(),
                k,
                e.capacity,
                e.cost
            ));
        }
        out.push_str("}\n");
        out
    }

    /// JSON rendering for debugging.
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<_> = self
            .labels
            .iter()
            .zip(&self.supplies)
            .map(|(l, b)| serde_json::json!({ "name": l.name(), "supply": b }))
            .collect();
        let edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                serde_json::json!({
                    "tail": self.labels[e.tail].name(),
                    "head": self.labels[e.head].name(),
                    "capacity": e.capacity,
                    "cost": format!("{:?}", e.cost),
                })
            })
            .collect();
        serde_json::json!({ "nodes": nodes, "edges": edges })
    }
}

/// Builds the network of an instance with the node-edge cost of `(t, i)`
/// supplied by `node_cost`.
fn build_layered(instance: &CgmInstance, node_cost: impl Fn(usize, usize) -> CostHandle) -> FlowNetwork {
    let layout = Layout { n_steps: instance.n_steps(), n_states: instance.n_states() };
    let (n, r) = (layout.n_steps, layout.n_states);
    let m = instance.population();
    crate::model::logfact::reserve(m);

    let mut labels = vec![NodeLabel::Source, NodeLabel::Sink];
    for t in 0..n {
        for i in 0..r {
            labels.push(NodeLabel::U { t, i });
            labels.push(NodeLabel::W { t, i });
        }
    }
    let mut supplies = vec![0i64; layout.node_count()];
    supplies[0] = m as i64;
    supplies[1] = -(m as i64);

    let mut edges = Vec::with_capacity(layout.edge_count());
    for i in 0..r {
        edges.push(FlowEdge { tail: 0, head: layout.u(0, i), capacity: m, cost: CostHandle::Zero });
    }
    for i in 0..r {
        edges.push(FlowEdge { tail: layout.w(n - 1, i), head: 1, capacity: m, cost: CostHandle::Zero });
    }
    for t in 0..n {
        for i in 0..r {
            edges.push(FlowEdge {
                tail: layout.u(t, i),
                head: layout.w(t, i),
                capacity: m,
                cost: node_cost(t, i),
            });
        }
    }
    for t in 0..n.saturating_sub(1) {
        for i in 0..r {
            for j in 0..r {
                edges.push(FlowEdge {
                    tail: layout.w(t, i),
                    head: layout.u(t + 1, j),
                    capacity: m,
                    cost: CostHandle::Transition { log_phi: instance.log_potential(t, i, j) },
                });
            }
        }
    }
    debug_assert_eq!(edges.len(), layout.edge_count());
    FlowNetwork { labels, edges, supplies, layout: Some(layout) }
}

fn node_handle(instance: &CgmInstance, t: usize, i: usize, concave: ConcavePart) -> CostHandle {
    CostHandle::Node { noise: instance.noise(t, i), y: instance.observation(t, i), concave }
}

/// The network whose optimal flows are exactly the MAP tables.
///
/// Interior node edges carry the non-convex `g + h`.
pub fn build_flow_network(instance: &CgmInstance) -> FlowNetwork {
    build_layered(instance, |t, i| {
        let concave = if instance.is_interior(t) { ConcavePart::Exact } else { ConcavePart::None };
        node_handle(instance, t, i, concave)
    })
}

/// [`build_flow_network`] with each interior `g` replaced by its tangent at
/// `linearization`, slopes chosen by `strategy`. All costs are discrete convex.
pub fn build_surrogate_network(
    instance: &CgmInstance,
    linearization: &ContingencyTables,
    strategy: AlphaStrategy,
) -> Result<FlowNetwork> {
    linearization.check_shape(instance)?;
    Ok(build_layered(instance, |t, i| {
        let concave = if instance.is_interior(t) {
            let n_lin = linearization.node[t][i];
            ConcavePart::Tangent { n_lin, alpha: alpha_value(strategy, n_lin) }
        } else {
            ConcavePart::None
        };
        node_handle(instance, t, i, concave)
    }))
}

/// Network with linear costs: `node_slopes[t][i]` on node edges and
/// `edge_slopes[t][i][j]` on transition edges.
pub fn build_linear_network(
    instance: &CgmInstance,
    node_slopes: &[Vec<f64>],
    edge_slopes: &[Vec<Vec<f64>>],
) -> FlowNetwork {
    let mut net = build_layered(instance, |t, i| CostHandle::Linear { slope: node_slopes[t][i] });
    let layout = net.layout.expect("layered network");
    for (t, mat) in edge_slopes.iter().enumerate() {
        for (i, row) in mat.iter().enumerate() {
            for (j, &slope) in row.iter().enumerate() {
                net.edges[layout.transition_edge(t, i, j)].cost = CostHandle::Linear { slope };
            }
        }
    }
    net
}

/// Integer flow value per edge.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Flow {
    pub values: Vec<u64>,
}

impl Flow {
    /// `sum_e c_e(z_e)`; `+inf` if any term is.
    pub fn cost(&self, network: &FlowNetwork) -> f64 {
        self.values
            .iter()
            .zip(network.edges())
            .map(|(&z, e)| e.cost.eval(z))
            .sum()
    }

    /// Checks capacities and conservation against the supplies.
    pub fn check_feasible(&self, network: &FlowNetwork) -> Result<()> {
        if self.values.len() != network.edges().len() {
            return Err(Error::ShapeMismatch(format!(
                "flow has {} values for {} edges",
                self.values.len(),
                network.edges().len()
            )));
        }
        let mut balance = vec![0i64; network.node_count()];
        for (k, (&z, e)) in self.values.iter().zip(network.edges()).enumerate() {
            if z > e.capacity {
                return Err(Error::Infeasible(format!("edge {k} carries {z} > capacity {}", e.capacity)));
            }
            balance[e.tail] += z as i64;
            balance[e.head] -= z as i64;
        }
        for (v, (&b, &s)) in balance.iter().zip(network.supplies()).enumerate() {
            if b != s {
                return Err(Error::Infeasible(format!(
                    "node {} has net outflow {b}, supply {s}",
                    network.labels()[v].name()
                )));
            }
        }
        Ok(())
    }
}

/// Reads node and edge tables off a feasible flow on a layered network.
pub fn extract_tables(network: &FlowNetwork, flow: &Flow) -> Result<ContingencyTables> {
    let layout = network
        .layout()
        .ok_or_else(|| Error::ShapeMismatch("network was not built from an instance".into()))?;
    flow.check_feasible(network)?;
    let mut tables = ContingencyTables::zeros(layout.n_steps, layout.n_states);
    for t in 0..layout.n_steps {
        for i in 0..layout.n_states {
            tables.node[t][i] = flow.values[layout.node_edge(t, i)];
        }
    }
    for t in 0..layout.n_steps.saturating_sub(1) {
        for i in 0..layout.n_states {
            for j in 0..layout.n_states {
                tables.edge[t][i][j] = flow.values[layout.transition_edge(t, i, j)];
            }
        }
    }
    Ok(tables)
}

/// The flow corresponding to `tables` on a layered network.
pub fn flow_from_tables(network: &FlowNetwork, tables: &ContingencyTables) -> Result<Flow> {
    let layout = network
        .layout()
        .ok_or_else(|| Error::ShapeMismatch("network was not built from an instance".into()))?;
    let mut values = vec![0u64; network.edges().len()];
    let last = layout.n_steps - 1;
    for i in 0..layout.n_states {
        values[layout.source_edge(i)] = tables.node[0][i];
        values[layout.sink_edge(i)] = tables.node[last][i];
    }
    for t in 0..layout.n_steps {
        for i in 0..layout.n_states {
            values[layout.node_edge(t, i)] = tables.node[t][i];
        }
    }
    for t in 0..last {
        for i in 0..layout.n_states {
            for j in 0..layout.n_states {
                values[layout.transition_edge(t, i, j)] = tables.edge[t][i][j];
            }
        }
    }
    Ok(Flow { values })
}
