//! Exhaustive ground truth for tiny instances.
//!
//! [`enumerate_feasible`] lists every integer table with population `M`.
//! The minimizers do not walk that list, which grows too quickly; they run an
//! exact dynamic program over node compositions that still enumerates every
//! transition matrix with given row sums, so no candidate is skipped.
//!
//! Tables are ordered lexicographically by `node[0]` followed by the edge
//! tables in `(t, i, j)` order. This is the enumeration order, and ties in
//! the minimizers resolve to the first table in it.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::flow::{flow_from_tables, Flow, FlowNetwork, Layout};
use crate::model::{log_factorial, objective, CgmInstance, ContingencyTables};

/// Cap on the number of configurations an oracle call may visit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_states: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        Self { max_states: 10_000_000 }
    }
}

struct Counter {
    used: u64,
    max: u64,
}

impl Counter {
    fn new(budget: EnumerationBudget) -> Self {
        Self { used: 0, max: budget.max_states }
    }

    fn tick(&mut self) -> Result<()> {
        self.used += 1;
        if self.used > self.max {
            return Err(Error::BudgetExceeded(self.max));
        }
        Ok(())
    }
}

/// First composition of `total` into `c.len()` parts in lex order.
fn first_composition(c: &mut [u64], total: u64) {
    c.iter_mut().for_each(|x| *x = 0);
    if let Some(last) = c.last_mut() {
        *last = total;
    }
}

/// Advances `c` to the next composition with the same sum in lex order.
fn next_composition(c: &mut [u64]) -> bool {
    let len = c.len();
    if len < 2 {
        return false;
    }
    let mut tail = c[len - 1];
    for k in (0..len - 1).rev() {
        if tail > 0 {
            c[k] += 1;
            c[k + 1..].iter_mut().for_each(|x| *x = 0);
            c[len - 1] = tail - 1;
            return true;
        }
        tail += c[k];
    }
    false
}

/// All compositions of `total` into `parts` parts, in lex order.
pub fn compositions(total: u64, parts: usize) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    if parts == 0 {
        if total == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    let mut c = vec![0; parts];
    first_composition(&mut c, total);
    loop {
        out.push(c.clone());
        if !next_composition(&mut c) {
            return out;
        }
    }
}

/// Iterator over every feasible table of an instance. See
/// [`enumerate_feasible`].
pub struct FeasibleTables {
    n_steps: usize,
    n_states: usize,
    population: u64,
    /// `levels[0]` is `node[0]`; `levels[1 + tR + i]` is row `i` of `edge[t]`.
    levels: Vec<Vec<u64>>,
    started: bool,
    done: bool,
    counter: Counter,
}

impl FeasibleTables {
    fn level_total(&self, level: usize) -> u64 {
        if level == 0 {
            return self.population;
        }
        let r = self.n_states;
        let (t, i) = ((level - 1) / r, (level - 1) % r);
        if t == 0 {
            self.levels[0][i]
        } else {
            // column i of edge[t - 1]
            (0..r).map(|k| self.levels[1 + (t - 1) * r + k][i]).sum()
        }
    }

    fn reset_from(&mut self, start: usize) {
        for level in start..self.levels.len() {
            let total = self.level_total(level);
            first_composition(&mut self.levels[level], total);
        }
    }

    fn current(&self) -> ContingencyTables {
        let (n, r) = (self.n_steps, self.n_states);
        let mut tables = ContingencyTables::zeros(n, r);
        tables.node[0] = self.levels[0].clone();
        for t in 0..n - 1 {
            for i in 0..r {
                tables.edge[t][i] = self.levels[1 + t * r + i].clone();
            }
            for j in 0..r {
                tables.node[t + 1][j] = (0..r).map(|i| tables.edge[t][i][j]).sum();
            }
        }
        tables
    }
}

impl Iterator for FeasibleTables {
    type Item = Result<ContingencyTables>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            self.reset_from(0);
        } else {
            let Some(k) = (0..self.levels.len()).rev().find(|&k| next_composition(&mut self.levels[k])) else {
                self.done = true;
                return None;
            };
            self.reset_from(k + 1);
        }
        if let Err(e) = self.counter.tick() {
            self.done = true;
            return Some(Err(e));
        }
        Some(Ok(self.current()))
    }
}

/// Lists every integer table with population `M` and consistent marginals,
/// each exactly once, in lexicographic order.
///
/// `node[0]` runs over the compositions of `M`, and row `i` of `edge[t]` over
/// the compositions of `node[t][i]`; `node[t + 1]` is the column sums of
/// `edge[t]`. Yields [`Error::BudgetExceeded`] once more than
/// `budget.max_states` tables would be produced.
pub fn enumerate_feasible(instance: &CgmInstance, budget: EnumerationBudget) -> FeasibleTables {
    let (n, r) = (instance.n_steps(), instance.n_states());
    FeasibleTables {
        n_steps: n,
        n_states: r,
        population: instance.population(),
        levels: vec![vec![0; r]; 1 + (n - 1) * r],
        started: false,
        done: false,
        counter: Counter::new(budget),
    }
}

/// Exact minimization over all tables of a separable layered cost.
///
/// `node_cost(t, i, z)` and `edge_cost(t, i, j, z)` may be `+inf`.
fn layered_minimum(
    n_steps: usize,
    n_states: usize,
    population: u64,
    node_cost: impl Fn(usize, usize, u64) -> f64,
    edge_cost: impl Fn(usize, usize, usize, u64) -> f64,
    budget: EnumerationBudget,
) -> Result<ContingencyTables> {
    let (n, r) = (n_steps, n_states);
    let mut counter = Counter::new(budget);
    let states = compositions(population, r);
    let index: HashMap<&[u64], usize> = states.iter().enumerate().map(|(k, s)| (s.as_slice(), k)).collect();
    let layer_cost =
        |t: usize, s: &[u64]| -> f64 { s.iter().enumerate().map(|(i, &z)| node_cost(t, i, z)).sum() };
    let row_options: Vec<Vec<Vec<u64>>> = (0..=population).map(|z| compositions(z, r)).collect();

    // value[t][s]: best cost of layers t.. given node[t] = states[s]
    let mut value = vec![vec![f64::INFINITY; states.len()]; n];
    for (k, s) in states.iter().enumerate() {
        value[n - 1][k] = layer_cost(n - 1, s);
    }

    // Visits each matrix with row sums `s` in lex order, passing its cost
    // and the index of its column sums.
    let for_each_matrix = |t: usize,
                           s: &[u64],
                           next_value: &[f64],
                           counter: &mut Counter,
                           visit: &mut dyn FnMut(&[usize], f64) -> bool|
     -> Result<()> {
        let rows: Vec<Vec<(f64, &[u64])>> = s
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                row_options[z as usize]
                    .iter()
                    .map(|c| {
                        let cost: f64 = c.iter().enumerate().map(|(j, &x)| edge_cost(t, i, j, x)).sum();
                        (cost, c.as_slice())
                    })
                    .collect()
            })
            .collect();
        let mut pick = vec![0usize; r];
        let mut cols = vec![0u64; r];
        loop {
            counter.tick()?;
            cols.iter_mut().for_each(|x| *x = 0);
            let mut cost = 0.0;
            for i in 0..r {
                let (c, row) = rows[i][pick[i]];
                cost += c;
                for j in 0..r {
                    cols[j] += row[j];
                }
            }
            let total = cost + next_value[index[cols.as_slice()]];
            if !visit(&pick, total) {
                return Ok(());
            }
            let Some(k) = (0..r).rev().find(|&k| pick[k] + 1 < rows[k].len()) else {
                return Ok(());
            };
            pick[k] += 1;
            pick[k + 1..].iter_mut().for_each(|x| *x = 0);
        }
    };

    for t in (0..n - 1).rev() {
        let (head, tail) = value.split_at_mut(t + 1);
        let next_value = &tail[0];
        for (k, s) in states.iter().enumerate() {
            let own = layer_cost(t, s);
            if own == f64::INFINITY {
                continue;
            }
            let mut best = f64::INFINITY;
            for_each_matrix(t, s, next_value, &mut counter, &mut |_, v| {
                best = best.min(v);
                true
            })?;
            head[t][k] = own + best;
        }
    }

    let close = |v: f64, target: f64| v <= target + 1e-12 * (1.0 + target.abs());
    let best = value[0].iter().copied().fold(f64::INFINITY, f64::min);
    if best == f64::INFINITY {
        return Err(Error::Infeasible("every table has infinite cost".into()));
    }
    let mut s = value[0].iter().position(|&v| close(v, best)).expect("minimum is attained");
    let mut tables = ContingencyTables::zeros(n, r);
    tables.node[0] = states[s].clone();
    for t in 0..n - 1 {
        let target = value[t][s] - layer_cost(t, &states[s]);
        let mut chosen = None;
        for_each_matrix(t, &states[s].clone(), &value[t + 1], &mut counter, &mut |pick, v| {
            if close(v, target) {
                chosen = Some(pick.to_vec());
                false
            } else {
                true
            }
        })?;
        let pick = chosen.expect("optimal successor exists");
        for i in 0..r {
            let z = tables.node[t][i] as usize;
            tables.edge[t][i] = row_options[z][pick[i]].clone();
        }
        for j in 0..r {
            tables.node[t + 1][j] = (0..r).map(|i| tables.edge[t][i][j]).sum();
        }
        s = index[tables.node[t + 1].as_slice()];
    }
    Ok(tables)
}

/// The table minimizing the MAP objective, with its objective value.
///
/// Ties resolve to the lexicographically smallest table.
pub fn brute_force_map(instance: &CgmInstance, budget: EnumerationBudget) -> Result<(ContingencyTables, f64)> {
    let m = instance.population();
    let tables = layered_minimum(
        instance.n_steps(),
        instance.n_states(),
        m,
        |t, i, z| {
            let g = if instance.is_interior(t) { -log_factorial(z) } else { 0.0 };
            instance.h_value(t, i, z) + g
        },
        |t, i, j, z| instance.f_value(t, i, j, z),
        budget,
    )?;
    let value = objective(instance, &tables)?;
    Ok((tables, value))
}

/// Minimum-cost integer flow by exhaustive search.
///
/// Networks built from an instance are searched through their tables; any
/// other network by depth-first enumeration of edge values.
pub fn brute_force_flow(network: &FlowNetwork, budget: EnumerationBudget) -> Result<(Flow, f64)> {
    let flow = match network.layout() {
        Some(layout) => layered_flow(network, layout, budget)?,
        None => generic_flow(network, budget)?,
    };
    let cost = flow.cost(network);
    Ok((flow, cost))
}

fn layered_flow(network: &FlowNetwork, layout: Layout, budget: EnumerationBudget) -> Result<Flow> {
    let edges = network.edges();
    let m = network.supplies()[0].max(0) as u64;
    let eval = |k: usize, z: u64| {
        if z > edges[k].capacity {
            f64::INFINITY
        } else {
            edges[k].cost.eval(z)
        }
    };
    let last = layout.n_steps - 1;
    let tables = layered_minimum(
        layout.n_steps,
        layout.n_states,
        m,
        |t, i, z| {
            let mut c = eval(layout.node_edge(t, i), z);
            if t == 0 {
                c += eval(layout.source_edge(i), z);
            }
            if t == last {
                c += eval(layout.sink_edge(i), z);
            }
            c
        },
        |t, i, j, z| eval(layout.transition_edge(t, i, j), z),
        budget,
    )?;
    flow_from_tables(network, &tables)
}

fn generic_flow(network: &FlowNetwork, budget: EnumerationBudget) -> Result<Flow> {
    let edges = network.edges();
    // the last edge index touching each node; its balance is final after it
    let mut closes: Vec<Vec<usize>> = vec![Vec::new(); edges.len()];
    let mut last_edge = vec![None; network.node_count()];
    for (k, e) in edges.iter().enumerate() {
        last_edge[e.tail] = Some(k);
        last_edge[e.head] = Some(k);
    }
    for (v, k) in last_edge.iter().enumerate() {
        match k {
            Some(k) => closes[*k].push(v),
            None if network.supplies()[v] != 0 => {
                return Err(Error::Infeasible(format!("isolated node {v} has nonzero supply")));
            }
            None => {}
        }
    }

    struct Search<'a> {
        network: &'a FlowNetwork,
        closes: Vec<Vec<usize>>,
        values: Vec<u64>,
        balance: Vec<i64>,
        best: Option<(Vec<u64>, f64)>,
        counter: Counter,
    }

    impl Search<'_> {
        fn run(&mut self, k: usize, cost: f64) -> Result<()> {
            let edges = self.network.edges();
            if k == edges.len() {
                let better = self.best.as_ref().map_or(true, |(_, b)| cost < b - 1e-12 * (1.0 + b.abs()));
                if better && cost.is_finite() {
                    self.best = Some((self.values.clone(), cost));
                }
                return Ok(());
            }
            let e = &edges[k];
            for z in 0..=e.capacity {
                self.counter.tick()?;
                let c = e.cost.eval(z);
                if c == f64::INFINITY {
                    continue;
                }
                self.values[k] = z;
                self.balance[e.tail] += z as i64;
                self.balance[e.head] -= z as i64;
                let supplies = self.network.supplies();
                if self.closes[k].iter().all(|&v| self.balance[v] == supplies[v]) {
                    self.run(k + 1, cost + c)?;
                }
                self.balance[e.tail] -= z as i64;
                self.balance[e.head] += z as i64;
            }
            self.values[k] = 0;
            Ok(())
        }
    }

    let mut search = Search {
        network,
        closes,
        values: vec![0; edges.len()],
        balance: vec![0; network.node_count()],
        best: None,
        counter: Counter::new(budget),
    };
    if edges.is_empty() {
        if network.supplies().iter().any(|&s| s != 0) {
            return Err(Error::Infeasible("no edges to carry the supplies".into()));
        }
        return Ok(Flow { values: Vec::new() });
    }
    search.run(0, 0.0)?;
    match search.best {
        Some((values, _)) => Ok(Flow { values }),
        None => Err(Error::Infeasible("no feasible flow with finite cost".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{build_flow_network, CostHandle};
    use crate::model::{validate_tables, NoiseModel};

    fn missing(n: usize, r: usize, m: u64) -> CgmInstance {
        CgmInstance::new(
            n,
            r,
            m,
            vec![vec![vec![1.0; r]; r]; n - 1],
            vec![vec![None; r]; n],
            vec![vec![NoiseModel::Missing; r]; n],
        )
        .unwrap()
    }

    #[test]
    fn compositions_are_in_lex_order() {
        assert_eq!(
            compositions(2, 3),
            vec![
                vec![0, 0, 2],
                vec![0, 1, 1],
                vec![0, 2, 0],
                vec![1, 0, 1],
                vec![1, 1, 0],
                vec![2, 0, 0]
            ]
        );
        assert_eq!(compositions(5, 1), vec![vec![5]]);
        assert_eq!(compositions(0, 2), vec![vec![0, 0]]);
        assert_eq!(compositions(6, 3).len(), 28);
    }

    #[test]
    fn forced_single_table() {
        let inst = missing(2, 1, 3);
        let all: Vec<_> = enumerate_feasible(&inst, EnumerationBudget::default())
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].node, vec![vec![3], vec![3]]);
    }

    /// Independent count for N = 2: sum over node[0] of the number of
    /// matrices with those row sums, `prod_i C(n_i + R - 1, R - 1)`.
    #[test]
    fn two_step_count_matches_closed_form() {
        let binom = |n: u64, k: u64| (0..k).fold(1u64, |acc, x| acc * (n - x) / (x + 1));
        for (r, m) in [(2usize, 2u64), (3, 3), (2, 5)] {
            let inst = missing(2, r, m);
            let expected: u64 = compositions(m, r)
                .iter()
                .map(|c| c.iter().map(|&z| binom(z + r as u64 - 1, r as u64 - 1)).product::<u64>())
                .sum();
            let count = enumerate_feasible(&inst, EnumerationBudget::default()).count() as u64;
            assert_eq!(count, expected, "R = {r}, M = {m}");
        }
        // R = 2, M = 2: node[0] in {(0,2), (1,1), (2,0)} gives 3 + 4 + 3
        assert_eq!(enumerate_feasible(&missing(2, 2, 2), EnumerationBudget::default()).count(), 10);
    }

    #[test]
    fn yielded_tables_are_valid_and_distinct() {
        let inst = missing(3, 2, 3);
        let all: Vec<_> = enumerate_feasible(&inst, EnumerationBudget::default())
            .collect::<Result<_>>()
            .unwrap();
        let unique: std::collections::HashSet<_> = all.iter().cloned().collect();
        assert_eq!(unique.len(), all.len());
        for t in &all {
            assert!(validate_tables(&inst, t).unwrap().is_empty());
        }
    }

    #[test]
    fn budget_aborts_enumeration() {
        let inst = missing(3, 3, 4);
        let items: Vec<_> = enumerate_feasible(&inst, EnumerationBudget { max_states: 5 }).collect();
        assert_eq!(items.len(), 6);
        assert!(matches!(items[5], Err(Error::BudgetExceeded(5))));
        assert!(matches!(
            brute_force_map(&inst, EnumerationBudget { max_states: 5 }),
            Err(Error::BudgetExceeded(5))
        ));
    }

    #[test]
    fn single_route_map_and_flow() {
        let inst = missing(2, 1, 2);
        let (tables, value) = brute_force_map(&inst, EnumerationBudget::default()).unwrap();
        assert_eq!(tables.node, vec![vec![2], vec![2]]);
        assert!((value - 2f64.ln()).abs() < 1e-12);
        let (_, cost) = brute_force_flow(&build_flow_network(&inst), EnumerationBudget::default()).unwrap();
        assert!((cost - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_cost_generic_network() {
        let mut net = FlowNetwork::new(vec![2, 0, -2]);
        net.add_edge(0, 1, 2, CostHandle::Zero);
        net.add_edge(1, 2, 2, CostHandle::Zero);
        net.add_edge(0, 2, 2, CostHandle::Zero);
        let (flow, cost) = brute_force_flow(&net, EnumerationBudget::default()).unwrap();
        assert_eq!(cost, 0.0);
        flow.check_feasible(&net).unwrap();
        // lex-first feasible flow routes everything on the direct edge
        assert_eq!(flow.values, vec![0, 0, 2]);
    }

    #[test]
    fn generic_network_detects_infeasibility() {
        let mut net = FlowNetwork::new(vec![3, -3]);
        net.add_edge(0, 1, 2, CostHandle::Zero);
        assert!(matches!(brute_force_flow(&net, EnumerationBudget::default()), Err(Error::Infeasible(_))));
    }

    fn mixed() -> CgmInstance {
        CgmInstance::new(
            3,
            2,
            4,
            vec![vec![vec![1.0, 3.0], vec![2.0, 0.5]], vec![vec![4.0, 1.0], vec![1.0, 1.0]]],
            vec![vec![Some(3.0), None], vec![Some(1.0), Some(2.0)], vec![None, Some(1.5)]],
            vec![
                vec![NoiseModel::Poisson, NoiseModel::Missing],
                vec![NoiseModel::Gaussian { var: 1.0 }, NoiseModel::Poisson],
                vec![NoiseModel::Missing, NoiseModel::Gaussian { var: 0.3 }],
            ],
        )
        .unwrap()
    }

    #[test]
    fn dynamic_program_matches_full_enumeration() {
        let inst = mixed();
        let mut best: Option<(ContingencyTables, f64)> = None;
        for t in enumerate_feasible(&inst, EnumerationBudget::default()) {
            let t = t.unwrap();
            let v = objective(&inst, &t).unwrap();
            if v.is_finite() && best.as_ref().map_or(true, |(_, b)| v < b - 1e-12 * (1.0 + b.abs())) {
                best = Some((t, v));
            }
        }
        let (expected, ev) = best.unwrap();
        let (tables, value) = brute_force_map(&inst, EnumerationBudget::default()).unwrap();
        assert!((value - ev).abs() < 1e-12);
        assert_eq!(tables, expected);

        let net = build_flow_network(&inst);
        let (flow, cost) = brute_force_flow(&net, EnumerationBudget::default()).unwrap();
        assert!((cost - ev).abs() < 1e-9);
        assert_eq!(crate::flow::extract_tables(&net, &flow).unwrap(), expected);
    }

    #[test]
    fn generic_search_agrees_with_layered_search() {
        let inst = mixed();
        let layered = build_flow_network(&inst);
        let mut generic = FlowNetwork::new(layered.supplies().to_vec());
        for e in layered.edges() {
            generic.add_edge(e.tail, e.head, e.capacity, e.cost);
        }
        let (_, a) = brute_force_flow(&layered, EnumerationBudget::default()).unwrap();
        let (_, b) = brute_force_flow(&generic, EnumerationBudget::default()).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn single_step_instance() {
        let inst = CgmInstance::new(
            1,
            2,
            3,
            vec![],
            vec![vec![Some(1.0), Some(2.0)]],
            vec![vec![NoiseModel::Gaussian { var: 1.0 }; 2]],
        )
        .unwrap();
        let (tables, _) = brute_force_map(&inst, EnumerationBudget::default()).unwrap();
        assert_eq!(tables.node, vec![vec![1, 2]]);
        assert_eq!(enumerate_feasible(&inst, EnumerationBudget::default()).count(), 4);
    }
}
