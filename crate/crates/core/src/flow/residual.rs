//! Residual-network state shared by the convex-cost flow solvers.
//!
//! Residual arcs carry per-unit costs `(c(z + Δ) - c(z)) / Δ` forward and
//! `(c(z - Δ) - c(z)) / Δ` backward; arcs that would enter the infinite part
//! of a cost are absent. Reduced costs are `cost + π(tail) - π(head)`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::flow::network::FlowNetwork;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Arc {
    pub edge: usize,
    pub forward: bool,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, lower node index first on ties
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// An augmenting path: arcs from a source to `target`, in order.
pub(crate) struct Path {
    pub arcs: Vec<Arc>,
    pub source: usize,
    pub target: usize,
}

pub(crate) struct Residual<'a> {
    pub net: &'a FlowNetwork,
    pub flow: Vec<u64>,
    pub lower: Vec<u64>,
    /// Units each node still has to send (negative: to receive).
    pub excess: Vec<i64>,
    pub potential: Vec<f64>,
    adjacency: Vec<Vec<Arc>>,
    dist: Vec<f64>,
    pred: Vec<Option<Arc>>,
    done: Vec<bool>,
    pub deadline: Option<Instant>,
}

impl<'a> Residual<'a> {
    /// Starts every edge at the first point of its finite domain.
    pub fn new(net: &'a FlowNetwork) -> Result<Self> {
        let n = net.node_count();
        let mut adjacency = vec![Vec::new(); n];
        let mut excess = net.supplies().to_vec();
        let mut flow = Vec::with_capacity(net.edges().len());
        let mut lower = Vec::with_capacity(net.edges().len());
        for (k, e) in net.edges().iter().enumerate() {
            adjacency[e.tail].push(Arc { edge: k, forward: true });
            adjacency[e.head].push(Arc { edge: k, forward: false });
            let lo = e.cost.domain_start();
            if lo > e.capacity || !e.cost.eval(lo).is_finite() {
                return Err(Error::Infeasible(format!(
                    "edge {k} has no finite-cost value within its capacity"
                )));
            }
            flow.push(lo);
            lower.push(lo);
            excess[e.tail] -= lo as i64;
            excess[e.head] += lo as i64;
        }
        Ok(Self {
            net,
            flow,
            lower,
            excess,
            potential: vec![0.0; n],
            adjacency,
            dist: vec![f64::INFINITY; n],
            pred: vec![None; n],
            done: vec![false; n],
            deadline: None,
        })
    }

    #[inline]
    fn head_of(&self, arc: Arc) -> usize {
        let e = &self.net.edges()[arc.edge];
        if arc.forward {
            e.head
        } else {
            e.tail
        }
    }

    #[inline]
    fn tail_of(&self, arc: Arc) -> usize {
        let e = &self.net.edges()[arc.edge];
        if arc.forward {
            e.tail
        } else {
            e.head
        }
    }

    /// Per-unit cost of pushing `delta` units along `arc`, or `None` when the
    /// arc is absent from the `delta`-residual network.
    #[inline]
    pub fn arc_cost(&self, arc: Arc, delta: u64) -> Option<f64> {
        let e = &self.net.edges()[arc.edge];
        let z = self.flow[arc.edge];
        if arc.forward {
            if z + delta > e.capacity {
                return None;
            }
            let c = if delta == 1 {
                e.cost.increment(z)
            } else {
                (e.cost.eval(z + delta) - e.cost.eval(z)) / delta as f64
            };
            c.is_finite().then_some(c)
        } else {
            if z < self.lower[arc.edge] + delta {
                return None;
            }
            let c = if delta == 1 {
                -e.cost.increment(z - 1)
            } else {
                (e.cost.eval(z - delta) - e.cost.eval(z)) / delta as f64
            };
            c.is_finite().then_some(c)
        }
    }

    #[inline]
    pub fn reduced_cost(&self, arc: Arc, cost: f64) -> f64 {
        cost + self.potential[self.tail_of(arc)] - self.potential[self.head_of(arc)]
    }

    /// All residual arcs of the `delta`-residual network in edge order.
    pub fn arcs(&self) -> impl Iterator<Item = Arc> + '_ {
        (0..self.net.edges().len())
            .flat_map(|edge| [Arc { edge, forward: true }, Arc { edge, forward: false }])
    }

    /// Smallest reduced cost over the `delta`-residual network.
    pub fn min_reduced_cost(&self, delta: u64) -> f64 {
        self.arcs()
            .filter_map(|a| self.arc_cost(a, delta).map(|c| self.reduced_cost(a, c)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Label-correcting initialization of potentials from a virtual root
    /// joined to every node at cost zero. Tolerates negative arc costs.
    pub fn init_potentials(&mut self) -> Result<()> {
        let n = self.net.node_count();
        let mut dist = vec![0.0f64; n];
        let mut in_queue = vec![true; n];
        let mut relax_count = vec![0usize; n];
        let mut queue: VecDeque<usize> = (0..n).collect();
        while let Some(v) = queue.pop_front() {
            in_queue[v] = false;
            for idx in 0..self.adjacency[v].len() {
                let arc = self.adjacency[v][idx];
                let Some(c) = self.arc_cost(arc, 1) else { continue };
                let w = self.head_of(arc);
                let cand = dist[v] + c;
                if cand < dist[w] - 1e-12 * (1.0 + cand.abs()) {
                    dist[w] = cand;
                    relax_count[w] += 1;
                    if relax_count[w] > n {
                        return Err(Error::NegativeCycle);
                    }
                    if !in_queue[w] {
                        in_queue[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        self.potential = dist;
        Ok(())
    }

    fn check_deadline(&self) -> Result<()> {
        match self.deadline {
            Some(d) if Instant::now() >= d => Err(Error::TimeLimit),
            _ => Ok(()),
        }
    }

    /// Dijkstra on reduced costs from every node with excess `>= delta`,
    /// stopping at the first settled node with excess `<= -delta`.
    /// Updates potentials so reduced costs stay nonnegative and the returned
    /// path has zero reduced cost.
    pub fn shortest_path(&mut self, delta: u64) -> Result<Option<Path>> {
        self.check_deadline()?;
        let d = delta as i64;
        let n = self.net.node_count();
        self.dist.iter_mut().for_each(|x| *x = f64::INFINITY);
        self.pred.iter_mut().for_each(|x| *x = None);
        self.done.iter_mut().for_each(|x| *x = false);
        let mut heap = BinaryHeap::new();
        for v in 0..n {
            if self.excess[v] >= d {
                self.dist[v] = 0.0;
                heap.push(HeapItem { dist: 0.0, node: v });
            }
        }
        let mut target = None;
        while let Some(HeapItem { dist, node }) = heap.pop() {
            if self.done[node] || dist > self.dist[node] {
                continue;
            }
            self.done[node] = true;
            if self.excess[node] <= -d {
                target = Some(node);
                break;
            }
            for idx in 0..self.adjacency[node].len() {
                let arc = self.adjacency[node][idx];
                let Some(c) = self.arc_cost(arc, delta) else { continue };
                let w = self.head_of(arc);
                if self.done[w] {
                    continue;
                }
                let rc = self.reduced_cost(arc, c).max(0.0);
                let cand = dist + rc;
                if cand < self.dist[w] {
                    self.dist[w] = cand;
                    self.pred[w] = Some(arc);
                    heap.push(HeapItem { dist: cand, node: w });
                }
            }
        }
        let Some(target) = target else { return Ok(None) };
        let cap = self.dist[target];
        for v in 0..n {
            self.potential[v] += self.dist[v].min(cap);
        }
        let mut arcs = Vec::new();
        let mut v = target;
        while let Some(arc) = self.pred[v] {
            arcs.push(arc);
            v = self.tail_of(arc);
        }
        arcs.reverse();
        Ok(Some(Path { arcs, source: v, target }))
    }

    /// Pushes `amount` units along `arc` (backward arcs reduce flow).
    pub fn push_arc(&mut self, arc: Arc, amount: u64) {
        let e = &self.net.edges()[arc.edge];
        let (from, to) = if arc.forward { (e.tail, e.head) } else { (e.head, e.tail) };
        if arc.forward {
            self.flow[arc.edge] += amount;
        } else {
            self.flow[arc.edge] -= amount;
        }
        self.excess[from] -= amount as i64;
        self.excess[to] += amount as i64;
    }

    /// Pushes `amount` along a path and returns its cost per unit.
    pub fn augment(&mut self, path: &Path, amount: u64) -> f64 {
        let mut unit_cost = 0.0;
        for &arc in &path.arcs {
            unit_cost += self.arc_cost(arc, amount).unwrap_or(f64::NAN);
            if arc.forward {
                self.flow[arc.edge] += amount;
            } else {
                self.flow[arc.edge] -= amount;
            }
        }
        self.excess[path.source] -= amount as i64;
        self.excess[path.target] += amount as i64;
        unit_cost
    }

    /// Largest amount the path can carry in the 1-residual network.
    pub fn bottleneck(&self, path: &Path) -> u64 {
        let mut amount = self.excess[path.source].min(-self.excess[path.target]) as u64;
        for &arc in &path.arcs {
            let e = &self.net.edges()[arc.edge];
            let z = self.flow[arc.edge];
            let room = if arc.forward { e.capacity - z } else { z - self.lower[arc.edge] };
            amount = amount.min(room);
        }
        amount
    }

    pub fn has_excess(&self, delta: u64) -> bool {
        self.excess.iter().any(|&x| x >= delta as i64)
    }

    pub fn has_deficit(&self, delta: u64) -> bool {
        self.excess.iter().any(|&x| x <= -(delta as i64))
    }

    pub fn unbalanced(&self) -> bool {
        self.excess.iter().any(|&x| x != 0)
    }
}
