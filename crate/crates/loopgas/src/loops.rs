//! Generalized loops (dangling-free edge subsets) and polymers (their
//! connected components).

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FactorGraph;

/// Default cap on the number of polymers or loops materialised.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 5_000_000;

/// Fixed-width bit set over the nodes of a graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeSet {
    words: Vec<u64>,
}

impl NodeSet {
    pub fn empty(len: usize) -> Self {
        NodeSet {
            words: vec![0; len.div_ceil(64).max(1)],
        }
    }

    pub fn insert(&mut self, x: usize) {
        self.words[x / 64] |= 1 << (x % 64);
    }

    pub fn contains(&self, x: usize) -> bool {
        self.words[x / 64] >> (x % 64) & 1 == 1
    }

    pub fn intersects(&self, other: &NodeSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub fn union_with(&mut self, other: &NodeSet) {
        self.words.iter_mut().zip(&other.words).for_each(|(a, b)| *a |= b);
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }
}

/// Counts `n_s` of variables and `m_t` of checks by induced degree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeVector {
    /// `var_counts[s]` is the number of touched variables of induced degree `s`.
    pub var_counts: Vec<usize>,
    /// `check_counts[t]` is the number of touched checks of induced degree `t`.
    pub check_counts: Vec<usize>,
}

impl TypeVector {
    pub fn size(&self) -> usize {
        self.var_counts.iter().sum::<usize>() + self.check_counts.iter().sum::<usize>()
    }

    pub fn edge_count(&self) -> usize {
        self.var_counts.iter().enumerate().map(|(s, c)| s * c).sum()
    }
}

/// An edge subset with the induced degrees of the nodes it touches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopSubgraph {
    pub edges: Vec<usize>,
    /// `(variable, induced degree)`, sorted by variable.
    pub var_degrees: Vec<(usize, usize)>,
    /// `(check, induced degree)`, sorted by check.
    pub check_degrees: Vec<(usize, usize)>,
}

impl LoopSubgraph {
    pub fn from_edges(graph: &FactorGraph, edges: &[usize]) -> Self {
        let mut sorted = edges.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut vars = std::collections::BTreeMap::new();
        let mut checks = std::collections::BTreeMap::new();
        for &e in &sorted {
            let (i, a) = graph.edge(e);
            *vars.entry(i).or_insert(0) += 1;
            *checks.entry(a).or_insert(0) += 1;
        }
        LoopSubgraph {
            edges: sorted,
            var_degrees: vars.into_iter().collect(),
            check_degrees: checks.into_iter().collect(),
        }
    }

    /// Number of touched variables plus touched checks.
    pub fn size(&self) -> usize {
        self.var_degrees.len() + self.check_degrees.len()
    }

    pub fn is_generalized_loop(&self) -> bool {
        self.var_degrees
            .iter()
            .chain(&self.check_degrees)
            .all(|&(_, d)| d >= 2)
    }

    pub fn type_vector(&self) -> TypeVector {
        let smax = self.var_degrees.iter().map(|e| e.1).max().unwrap_or(0);
        let tmax = self.check_degrees.iter().map(|e| e.1).max().unwrap_or(0);
        let mut var_counts = vec![0; smax + 1];
        let mut check_counts = vec![0; tmax + 1];
        self.var_degrees.iter().for_each(|&(_, d)| var_counts[d] += 1);
        self.check_degrees.iter().for_each(|&(_, d)| check_counts[d] += 1);
        TypeVector {
            var_counts,
            check_counts,
        }
    }

    pub fn nodes(&self, graph: &FactorGraph) -> NodeSet {
        let mut set = NodeSet::empty(graph.num_nodes());
        self.var_degrees.iter().for_each(|&(i, _)| set.insert(i));
        self.check_degrees
            .iter()
            .for_each(|&(a, _)| set.insert(graph.n() + a));
        set
    }

    /// For each touched node (global index), the mask of its incident edges in the subgraph.
    pub fn node_masks(&self, graph: &FactorGraph) -> Vec<(usize, u32)> {
        let mut masks: std::collections::BTreeMap<usize, u32> = Default::default();
        for &e in &self.edges {
            let (u, v) = graph.endpoints(e);
            *masks.entry(u).or_insert(0) |= 1 << graph.edge_pos_at(u, e);
            *masks.entry(v).or_insert(0) |= 1 << graph.edge_pos_at(v, e);
        }
        masks.into_iter().collect()
    }

    /// Connected components, each as a sorted edge list.
    pub fn components(&self, graph: &FactorGraph) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.edges.len()];
        let mut comps = Vec::new();
        for start in 0..self.edges.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![self.edges[start]];
            let mut queue = VecDeque::from([start]);
            while let Some(k) = queue.pop_front() {
                let (u, v) = graph.endpoints(self.edges[k]);
                for j in 0..self.edges.len() {
                    if !seen[j] {
                        let (x, y) = graph.endpoints(self.edges[j]);
                        if x == u || x == v || y == u || y == v {
                            seen[j] = true;
                            comp.push(self.edges[j]);
                            queue.push_back(j);
                        }
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort();
        comps
    }

    pub fn is_connected(&self, graph: &FactorGraph) -> bool {
        !self.edges.is_empty() && self.components(graph).len() == 1
    }
}

/// Whether a non-empty edge list spans a connected subgraph.
fn edges_connected(graph: &FactorGraph, edges: &[usize]) -> bool {
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut parent: Vec<usize> = (0..graph.num_nodes()).collect();
    let mut parts = 0usize;
    let mut touched = vec![false; graph.num_nodes()];
    for &e in edges {
        let (u, v) = graph.endpoints(e);
        for x in [u, v] {
            if !touched[x] {
                touched[x] = true;
                parts += 1;
            }
        }
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru != rv {
            parent[ru] = rv;
            parts -= 1;
        }
    }
    !edges.is_empty() && parts == 1
}

/// A connected generalized loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polymer {
    pub subgraph: LoopSubgraph,
    /// Edges of a breadth-first spanning tree, certifying connectivity.
    pub spanning_tree: Vec<usize>,
    pub nodes: NodeSet,
    pub node_masks: Vec<(usize, u32)>,
}

impl Polymer {
    pub fn from_edges(graph: &FactorGraph, edges: &[usize]) -> Self {
        let subgraph = LoopSubgraph::from_edges(graph, edges);
        let nodes = subgraph.nodes(graph);
        let node_masks = subgraph.node_masks(graph);
        let spanning_tree = spanning_tree(graph, &subgraph.edges);
        Polymer {
            subgraph,
            spanning_tree,
            nodes,
            node_masks,
        }
    }

    pub fn size(&self) -> usize {
        self.subgraph.size()
    }

    pub fn overlaps(&self, other: &Polymer) -> bool {
        self.nodes.intersects(&other.nodes)
    }
}

fn spanning_tree(graph: &FactorGraph, edges: &[usize]) -> Vec<usize> {
    let Some(&first) = edges.first() else {
        return Vec::new();
    };
    let mut reached = NodeSet::empty(graph.num_nodes());
    reached.insert(graph.endpoints(first).0);
    let mut tree = Vec::new();
    let mut queue = VecDeque::from([graph.endpoints(first).0]);
    while let Some(x) = queue.pop_front() {
        for &e in edges {
            let (u, v) = graph.endpoints(e);
            let other = if u == x {
                v
            } else if v == x {
                u
            } else {
                continue;
            };
            if !reached.contains(other) {
                reached.insert(other);
                tree.push(e);
                queue.push_back(other);
            }
        }
    }
    tree.sort_unstable();
    tree
}

const UNSEEN: u8 = 0;
const FRONTIER: u8 = 1;
const INSIDE: u8 = 2;
const OUTSIDE: u8 = 3;

/// Grows every polymer whose smallest node is `root` by deciding frontier edges
/// in breadth-first order; each edge set is reached by exactly one decision path.
struct Grower<'g> {
    graph: &'g FactorGraph,
    root: usize,
    max_size: usize,
    state: Vec<u8>,
    in_comp: Vec<bool>,
    deg: Vec<u32>,
    undecided: Vec<u32>,
    frontier: Vec<usize>,
    chosen: Vec<usize>,
    members: Vec<usize>,
    found: Vec<Vec<usize>>,
    counter: &'g AtomicU64,
    limit: u64,
    aborted: &'g AtomicBool,
}

impl<'g> Grower<'g> {
    fn allowed(&self, e: usize) -> bool {
        let (u, v) = self.graph.endpoints(e);
        u >= self.root && v >= self.root
    }

    fn add_node(&mut self, x: usize) -> usize {
        self.in_comp[x] = true;
        self.members.push(x);
        let mut pushed = 0;
        for &e in self.graph.node_edges(x) {
            if !self.allowed(e) {
                continue;
            }
            match self.state[e] {
                UNSEEN => {
                    self.state[e] = FRONTIER;
                    self.frontier.push(e);
                    self.undecided[x] += 1;
                    pushed += 1;
                }
                FRONTIER => self.undecided[x] += 1,
                _ => {}
            }
        }
        pushed
    }

    fn remove_node(&mut self, x: usize, pushed: usize) {
        for _ in 0..pushed {
            let e = self.frontier.pop().expect("frontier underflow");
            self.state[e] = UNSEEN;
        }
        self.undecided[x] = 0;
        self.in_comp[x] = false;
        self.members.pop();
    }

    fn viable(&self, x: usize) -> bool {
        self.deg[x] + self.undecided[x] >= 2
    }

    fn run(&mut self) {
        self.add_node(self.root);
        if self.viable(self.root) {
            self.recurse(0);
        }
    }

    fn recurse(&mut self, head: usize) {
        if self.aborted.load(Ordering::Relaxed) {
            return;
        }
        if head == self.frontier.len() {
            if !self.chosen.is_empty() && self.members.iter().all(|&x| self.deg[x] >= 2) {
                let mut edges = self.chosen.clone();
                edges.sort_unstable();
                self.found.push(edges);
                if self.counter.fetch_add(1, Ordering::Relaxed) + 1 > self.limit {
                    self.aborted.store(true, Ordering::Relaxed);
                }
            }
            return;
        }
        let e = self.frontier[head];
        let (u, v) = self.graph.endpoints(e);
        let fresh = if !self.in_comp[u] {
            Some(u)
        } else if !self.in_comp[v] {
            Some(v)
        } else {
            None
        };
        let old: Vec<usize> = [u, v].into_iter().filter(|&x| self.in_comp[x]).collect();

        if fresh.is_none() || self.members.len() < self.max_size {
            self.state[e] = INSIDE;
            self.chosen.push(e);
            for &x in &old {
                self.undecided[x] -= 1;
                self.deg[x] += 1;
            }
            let pushed = fresh.map(|w| {
                self.deg[w] += 1;
                self.add_node(w)
            });
            if fresh.map_or(true, |w| self.viable(w)) {
                self.recurse(head + 1);
            }
            if let (Some(w), Some(p)) = (fresh, pushed) {
                self.deg[w] -= 1;
                self.remove_node(w, p);
            }
            for &x in &old {
                self.undecided[x] += 1;
                self.deg[x] -= 1;
            }
            self.chosen.pop();
        }

        self.state[e] = OUTSIDE;
        for &x in &old {
            self.undecided[x] -= 1;
        }
        if old.iter().all(|&x| self.viable(x)) {
            self.recurse(head + 1);
        }
        for &x in &old {
            self.undecided[x] += 1;
        }
        self.state[e] = FRONTIER;
    }
}

/// All polymers with at most `max_size` touched nodes, sorted by edge list.
pub fn enumerate_polymers(graph: &FactorGraph, max_size: usize) -> Result<Vec<Polymer>> {
    enumerate_polymers_with_budget(graph, max_size, DEFAULT_ENUMERATION_BUDGET)
}

pub fn enumerate_polymers_with_budget(
    graph: &FactorGraph,
    max_size: usize,
    budget: u64,
) -> Result<Vec<Polymer>> {
    let total = graph.num_nodes();
    if max_size >= total {
        let mut all = Vec::new();
        visit_generalized_loops(graph, budget, |edges| {
            if edges_connected(graph, edges) {
                all.push(edges.to_vec());
            }
        })?;
        all.sort();
        return Ok(all
            .par_iter()
            .map(|edges| Polymer::from_edges(graph, edges))
            .collect());
    }
    let counter = AtomicU64::new(0);
    let aborted = AtomicBool::new(false);
    let per_root: Vec<Vec<Vec<usize>>> = (0..total)
        .into_par_iter()
        .map(|root| {
            let mut grower = Grower {
                graph,
                root,
                max_size,
                state: vec![UNSEEN; graph.num_edges()],
                in_comp: vec![false; total],
                deg: vec![0; total],
                undecided: vec![0; total],
                frontier: Vec::new(),
                chosen: Vec::new(),
                members: Vec::new(),
                found: Vec::new(),
                counter: &counter,
                limit: budget,
                aborted: &aborted,
            };
            grower.run();
            grower.found
        })
        .collect();
    if aborted.load(Ordering::Relaxed) {
        return Err(Error::BudgetExceeded {
            what: "polymer enumeration".into(),
            limit: budget,
        });
    }
    let mut all: Vec<Vec<usize>> = per_root.into_iter().flatten().collect();
    all.sort();
    Ok(all
        .par_iter()
        .map(|edges| Polymer::from_edges(graph, edges))
        .collect())
}

/// Calls `visit` with the polymer indices of every union of pairwise
/// node-disjoint polymers (each generalized loop once, components ascending).
pub fn visit_compositions<F: FnMut(&[usize])>(
    polymers: &[Polymer],
    budget: u64,
    mut visit: F,
) -> Result<u64> {
    fn rec<F: FnMut(&[usize])>(
        polymers: &[Polymer],
        start: usize,
        used: &NodeSet,
        stack: &mut Vec<usize>,
        count: &mut u64,
        budget: u64,
        visit: &mut F,
    ) -> bool {
        for j in start..polymers.len() {
            if polymers[j].nodes.intersects(used) {
                continue;
            }
            stack.push(j);
            *count += 1;
            if *count > budget {
                return false;
            }
            visit(stack);
            let mut next = used.clone();
            next.union_with(&polymers[j].nodes);
            if !rec(polymers, j + 1, &next, stack, count, budget, visit) {
                return false;
            }
            stack.pop();
        }
        true
    }
    let Some(first) = polymers.first() else {
        return Ok(0);
    };
    let used = NodeSet::empty(first.nodes.words.len() * 64);
    let mut count = 0;
    if !rec(polymers, 0, &used, &mut Vec::new(), &mut count, budget, &mut visit) {
        return Err(Error::BudgetExceeded {
            what: "generalized-loop composition".into(),
            limit: budget,
        });
    }
    Ok(count)
}

/// Calls `visit` with the sorted edge list of every generalized loop, found by
/// an include/exclude search over edges that prunes nodes left with degree one.
pub fn visit_generalized_loops<F: FnMut(&[usize])>(
    graph: &FactorGraph,
    budget: u64,
    mut visit: F,
) -> Result<u64> {
    struct Search<'a, F> {
        graph: &'a FactorGraph,
        deg: Vec<usize>,
        undecided: Vec<usize>,
        chosen: Vec<usize>,
        count: u64,
        budget: u64,
        visit: F,
    }
    impl<F: FnMut(&[usize])> Search<'_, F> {
        fn alive(&self, x: usize) -> bool {
            !(self.deg[x] == 1 && self.undecided[x] == 0)
        }
        fn rec(&mut self, e: usize) -> bool {
            if e == self.graph.num_edges() {
                if !self.chosen.is_empty() {
                    self.count += 1;
                    if self.count > self.budget {
                        return false;
                    }
                    (self.visit)(&self.chosen);
                }
                return true;
            }
            let (u, v) = self.graph.endpoints(e);
            self.undecided[u] -= 1;
            self.undecided[v] -= 1;
            let mut ok = true;
            if self.alive(u) && self.alive(v) {
                ok = self.rec(e + 1);
            }
            if ok {
                self.deg[u] += 1;
                self.deg[v] += 1;
                self.chosen.push(e);
                if self.alive(u) && self.alive(v) {
                    ok = self.rec(e + 1);
                }
                self.chosen.pop();
                self.deg[u] -= 1;
                self.deg[v] -= 1;
            }
            self.undecided[u] += 1;
            self.undecided[v] += 1;
            ok
        }
    }
    let total = graph.num_nodes();
    let mut search = Search {
        graph,
        deg: vec![0; total],
        undecided: (0..total).map(|x| graph.node_edges(x).len()).collect(),
        chosen: Vec::new(),
        count: 0,
        budget,
        visit: &mut visit,
    };
    if !search.rec(0) {
        return Err(Error::BudgetExceeded {
            what: "generalized-loop enumeration".into(),
            limit: budget,
        });
    }
    Ok(search.count)
}

/// Every generalized loop of the graph in edge-search order.
pub fn enumerate_generalized_loops(graph: &FactorGraph, budget: u64) -> Result<Vec<LoopSubgraph>> {
    let mut loops = Vec::new();
    visit_generalized_loops(graph, budget, |edges| {
        loops.push(LoopSubgraph::from_edges(graph, edges));
    })?;
    Ok(loops)
}

/// Largest edge count accepted by the raw subset filters.
pub const RAW_SUBSET_EDGE_CAP: usize = 24;

/// Every non-empty dangling-free edge subset, by scanning all `2^|E|` subsets.
pub fn dangling_free_subsets_raw(graph: &FactorGraph) -> Result<Vec<Vec<usize>>> {
    let e_count = graph.num_edges();
    if e_count > RAW_SUBSET_EDGE_CAP {
        return Err(Error::BudgetExceeded {
            what: format!("2^{e_count} raw edge subsets"),
            limit: 1 << RAW_SUBSET_EDGE_CAP,
        });
    }
    let total = graph.num_nodes();
    let endpoints: Vec<(usize, usize)> = (0..e_count).map(|e| graph.endpoints(e)).collect();
    let found: Vec<Vec<usize>> = (1u64..(1u64 << e_count))
        .into_par_iter()
        .filter_map(|mask| {
            let mut deg = vec![0u8; total];
            let mut rest = mask;
            while rest != 0 {
                let e = rest.trailing_zeros() as usize;
                deg[endpoints[e].0] += 1;
                deg[endpoints[e].1] += 1;
                rest &= rest - 1;
            }
            deg.iter()
                .all(|&d| d != 1)
                .then(|| (0..e_count).filter(|&e| mask >> e & 1 == 1).collect())
        })
        .collect();
    let mut found = found;
    found.sort();
    Ok(found)
}

/// Connected dangling-free edge subsets by raw scanning.
pub fn polymers_raw(graph: &FactorGraph) -> Result<Vec<Vec<usize>>> {
    Ok(dangling_free_subsets_raw(graph)?
        .into_iter()
        .filter(|edges| LoopSubgraph::from_edges(graph, edges).is_connected(graph))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightSpec;

    fn four_cycle() -> FactorGraph {
        FactorGraph::build(2, 2, &[(0, 0), (1, 0), (0, 1), (1, 1)], WeightSpec::ldpc_zero(2)).unwrap()
    }

    #[test]
    fn single_cycle_polymer() {
        let p = enumerate_polymers(&four_cycle(), 10).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].size(), 4);
        assert_eq!(p[0].spanning_tree.len(), 3);
        assert_eq!(enumerate_polymers(&four_cycle(), 3).unwrap().len(), 0);
    }

    #[test]
    fn two_disjoint_cycles_give_three_loops() {
        let edges = [
            (0, 0), (1, 0), (0, 1), (1, 1),
            (2, 2), (3, 2), (2, 3), (3, 3),
        ];
        let g = FactorGraph::build(4, 4, &edges, WeightSpec::ldpc_zero(4)).unwrap();
        assert_eq!(enumerate_generalized_loops(&g, 100).unwrap().len(), 3);
    }

    #[test]
    fn path_has_no_loops() {
        let g = FactorGraph::build(2, 1, &[(0, 0), (1, 0)], WeightSpec::ldpc_zero(2)).unwrap();
        assert!(enumerate_polymers(&g, 10).unwrap().is_empty());
        assert!(enumerate_generalized_loops(&g, 10).unwrap().is_empty());
    }

    #[test]
    fn k23_matches_raw_scan() {
        let edges: Vec<(usize, usize)> = (0..2).flat_map(|a| (0..3).map(move |i| (i, a))).collect();
        let g = FactorGraph::build(3, 2, &edges, WeightSpec::ldpc_zero(3)).unwrap();
        let fast: Vec<Vec<usize>> = enumerate_polymers(&g, 100)
            .unwrap()
            .into_iter()
            .map(|p| p.subgraph.edges)
            .collect();
        assert_eq!(fast, polymers_raw(&g).unwrap());
        assert_eq!(fast.len(), 4);
    }

    #[test]
    fn budget_is_enforced() {
        let edges: Vec<(usize, usize)> = (0..3).flat_map(|a| (0..4).map(move |i| (i, a))).collect();
        let g = FactorGraph::build(4, 3, &edges, WeightSpec::ldpc_zero(4)).unwrap();
        assert!(matches!(
            enumerate_polymers_with_budget(&g, 100, 3),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
