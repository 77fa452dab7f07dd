//! Loop activities, the loop-sum identity and its verification.
//!
//! For a subgraph `g` the activity factorises over touched nodes,
//! `K(g) = prod_i K_i(g) prod_a K_a(g)`, with
//!
//! ```text
//! K_a(g) = sum_s psi_a(s) prod_{i not in g} (1 + s_i t_{i->a}) prod_{i in g} (s_i - t_hat_{a->i})
//!        / sum_s psi_a(s) prod_i (1 + s_i t_{i->a})
//! K_i(g) = sum_s phi_i(s) prod_{a not in g} (1 + s t_hat_{a->i}) prod_{a in g} (s - t_{i->a})
//!        / sum_s phi_i(s) prod_a (1 + s t_hat_{a->i})
//! ```
//!
//! where `phi_i(s) = exp(h_i s)`. A node's factor for the empty local mask is 1.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bethe::bethe_free_energy;
use crate::bp::{residual, MessageSet};
use crate::error::{Error, Result};
use crate::exact::brute_force_log_partition;
use crate::graph::{FactorGraph, ModelKind, Node, TABLE_DEGREE_CAP};
use crate::loops::{
    enumerate_polymers_with_budget, visit_compositions, LoopSubgraph, Polymer,
    DEFAULT_ENUMERATION_BUDGET,
};

/// Denominators below this magnitude are reported as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-14;

/// Largest edge count accepted by [`verify_full_expansion`].
pub const FULL_EXPANSION_EDGE_CAP: usize = 20;

/// Kahan-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new(start: f64) -> Self {
        KahanSum {
            sum: start,
            comp: 0.0,
        }
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

fn node_label(graph: &FactorGraph, x: usize) -> String {
    graph.node_from_index(x).to_string()
}

fn singular(graph: &FactorGraph, x: usize, value: f64) -> Error {
    Error::SingularDenominator {
        node: node_label(graph, x),
        value,
    }
}

/// Per-node activity factors for every local mask, at fixed messages.
#[derive(Debug, Clone)]
pub struct ActivityTable {
    /// Indexed by global node; `tables[x][mask]` with bit `k` for the node's `k`-th edge.
    tables: Vec<Vec<f64>>,
}

impl ActivityTable {
    pub fn new(graph: &FactorGraph, messages: &MessageSet) -> Result<Self> {
        if messages.var_to_check.len() != graph.num_edges()
            || messages.check_to_var.len() != graph.num_edges()
        {
            return Err(Error::InvalidParameter("message set does not match graph".into()));
        }
        let tables = (0..graph.num_nodes())
            .into_par_iter()
            .map(|x| node_table(graph, messages, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(ActivityTable { tables })
    }

    /// Factor of node `x` for the given local mask.
    pub fn factor(&self, x: usize, mask: u32) -> f64 {
        self.tables[x][mask as usize]
    }

    /// Activity of a polymer, from its cached node masks.
    pub fn polymer_activity(&self, polymer: &Polymer) -> f64 {
        polymer
            .node_masks
            .iter()
            .map(|&(x, mask)| self.factor(x, mask))
            .product()
    }

    /// Activity of any edge subset.
    pub fn subgraph_activity(&self, graph: &FactorGraph, g: &LoopSubgraph) -> f64 {
        g.node_masks(graph)
            .iter()
            .map(|&(x, mask)| self.factor(x, mask))
            .product()
    }
}

fn node_table(graph: &FactorGraph, messages: &MessageSet, x: usize) -> Result<Vec<f64>> {
    let edges = graph.node_edges(x);
    let d = edges.len();
    if d > TABLE_DEGREE_CAP {
        return Err(Error::DegreeTooLarge {
            node: x,
            degree: d,
            cap: TABLE_DEGREE_CAP,
        });
    }
    match graph.node_from_index(x) {
        Node::Var(i) => var_table(graph, messages, i, x),
        Node::Check(a) => match graph.kind() {
            ModelKind::Ldpc | ModelKind::Ldgm => parity_check_table(graph, messages, a, x),
            ModelKind::General => general_check_table(graph, messages, a, x),
        },
    }
}

/// Closed form for the two-term variable sum, evaluated per mask.
fn var_table(graph: &FactorGraph, messages: &MessageSet, i: usize, x: usize) -> Result<Vec<f64>> {
    let edges = graph.var_edges(i);
    let d = edges.len();
    let h = graph.var_field(i);
    let (ep, em) = (h.exp(), (-h).exp());
    let den = ep * edges.iter().map(|&e| 1.0 + messages.check_to_var[e]).product::<f64>()
        + em * edges.iter().map(|&e| 1.0 - messages.check_to_var[e]).product::<f64>();
    if den.abs() < SINGULAR_THRESHOLD {
        return Err(singular(graph, x, den));
    }
    Ok((0u32..1 << d)
        .map(|mask| {
            let mut plus = ep;
            let mut minus = em;
            for (k, &e) in edges.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    let t = messages.var_to_check[e];
                    plus *= 1.0 - t;
                    minus *= -1.0 - t;
                } else {
                    let t_hat = messages.check_to_var[e];
                    plus *= 1.0 + t_hat;
                    minus *= 1.0 - t_hat;
                }
            }
            (plus + minus) / den
        })
        .collect())
}

/// LDPC: `(u + (-1)^{|g|} v) / (1 + u w)`; LDGM: `((-1)^{|g|} v + tanh h_a u) / (1 + tanh h_a u w)`.
fn parity_check_table(
    graph: &FactorGraph,
    messages: &MessageSet,
    a: usize,
    x: usize,
) -> Result<Vec<f64>> {
    let edges = graph.check_edges(a);
    let d = edges.len();
    let coupling = match graph.kind() {
        ModelKind::Ldgm => graph.check_field(a).tanh(),
        _ => 1.0,
    };
    let all: f64 = edges.iter().map(|&e| messages.var_to_check[e]).product();
    let den = 1.0 + coupling * all;
    if den.abs() < SINGULAR_THRESHOLD {
        return Err(singular(graph, x, den));
    }
    Ok((0u32..1 << d)
        .map(|mask| {
            let mut u = 1.0;
            let mut v = 1.0;
            for (k, &e) in edges.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    v *= -messages.check_to_var[e];
                } else {
                    u *= messages.var_to_check[e];
                }
            }
            (v + coupling * u) / den
        })
        .collect())
}

/// Tensor transform of the weight table, one coordinate at a time.
fn general_check_table(
    graph: &FactorGraph,
    messages: &MessageSet,
    a: usize,
    x: usize,
) -> Result<Vec<f64>> {
    let edges = graph.check_edges(a);
    let d = edges.len();
    let mut table: Vec<f64> = (0u32..1 << d).map(|mask| graph.check_weight(a, mask)).collect();
    for (k, &e) in edges.iter().enumerate() {
        let t = messages.var_to_check[e];
        let t_hat = messages.check_to_var[e];
        let bit = 1usize << k;
        for idx in 0..table.len() {
            if idx & bit == 0 {
                let plus = table[idx];
                let minus = table[idx | bit];
                table[idx] = plus * (1.0 + t) + minus * (1.0 - t);
                table[idx | bit] = plus * (1.0 - t_hat) + minus * (-1.0 - t_hat);
            }
        }
    }
    let den = table[0];
    if den.abs() < SINGULAR_THRESHOLD {
        return Err(singular(graph, x, den));
    }
    Ok(table.into_iter().map(|v| v / den).collect())
}

/// A node's contribution to an activity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFactor {
    pub node: Node,
    pub induced_degree: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityReport {
    pub value: f64,
    pub factors: Vec<NodeFactor>,
    /// Applicable bound, filled in by the bound layer when its hypotheses hold.
    pub bound: Option<f64>,
    pub bound_kind: Option<crate::bounds::BoundKind>,
}

/// Activity of an arbitrary edge subset with its per-node factors.
pub fn activity(graph: &FactorGraph, messages: &MessageSet, g: &LoopSubgraph) -> Result<ActivityReport> {
    let masks = g.node_masks(graph);
    let mut factors = Vec::with_capacity(masks.len());
    for (x, mask) in masks {
        let table = node_table(graph, messages, x)?;
        factors.push(NodeFactor {
            node: graph.node_from_index(x),
            induced_degree: mask.count_ones() as usize,
            value: table[mask as usize],
        });
    }
    Ok(ActivityReport {
        value: factors.iter().map(|f| f.value).product(),
        factors,
        bound: None,
        bound_kind: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSumReport {
    /// `1 + sum_g K(g)` over all generalized loops.
    pub value: f64,
    pub loop_count: u64,
}

/// Polymers of the graph together with their activities.
pub fn polymer_activities(
    graph: &FactorGraph,
    messages: &MessageSet,
    max_size: usize,
    budget: u64,
) -> Result<(Vec<Polymer>, Vec<f64>)> {
    let polymers = enumerate_polymers_with_budget(graph, max_size, budget)?;
    let table = ActivityTable::new(graph, messages)?;
    let k = polymers.iter().map(|p| table.polymer_activity(p)).collect();
    Ok((polymers, k))
}

/// Largest number of simultaneously open edges in [`contract_loop_sum`].
pub const MAX_FRONTIER_EDGES: usize = 63;

/// Greedy node order keeping the set of half-processed edges small.
fn elimination_order(graph: &FactorGraph) -> Vec<usize> {
    let total = graph.num_nodes();
    let mut done = vec![false; total];
    let mut open = vec![0usize; total];
    let mut order = Vec::with_capacity(total);
    for _ in 0..total {
        let next = (0..total)
            .filter(|&x| !done[x])
            .min_by_key(|&x| {
                let deg = graph.node_edges(x).len() as i64;
                (deg - 2 * open[x] as i64, std::cmp::Reverse(open[x]), x)
            })
            .expect("unprocessed node");
        done[next] = true;
        for &e in graph.node_edges(next) {
            let (u, v) = graph.endpoints(e);
            let other = if u == next { v } else { u };
            if !done[other] {
                open[other] += 1;
            }
        }
        order.push(next);
    }
    order
}

/// `1 + sum_g K(g)` and the number of generalized loops, by contracting the
/// per-node factor tables (with single-edge masks set to zero) node by node.
pub fn contract_loop_sum(graph: &FactorGraph, table: &ActivityTable, budget: u64) -> Result<LoopSumReport> {
    let order = elimination_order(graph);
    let total = graph.num_nodes();
    let mut done = vec![false; total];
    // Open edges and the state bit each one occupies.
    let mut open: Vec<usize> = Vec::new();
    let mut states: BTreeMap<u64, (KahanSum, u128)> = BTreeMap::new();
    states.insert(0, (KahanSum::new(1.0), 1));
    for &x in &order {
        let edges = graph.node_edges(x);
        let mut closing = Vec::new();
        let mut opening = Vec::new();
        for (k, &e) in edges.iter().enumerate() {
            let (u, v) = graph.endpoints(e);
            let other = if u == x { v } else { u };
            if done[other] {
                let slot = open.iter().position(|&f| f == e).expect("open edge");
                closing.push((k, slot));
            } else {
                opening.push((k, e));
            }
        }
        let kept: Vec<usize> = (0..open.len())
            .filter(|s| !closing.iter().any(|c| c.1 == *s))
            .collect();
        let next_open: Vec<usize> = kept
            .iter()
            .map(|&s| open[s])
            .chain(opening.iter().map(|o| o.1))
            .collect();
        if next_open.len() > MAX_FRONTIER_EDGES {
            return Err(Error::BudgetExceeded {
                what: "loop-sum contraction frontier".into(),
                limit: MAX_FRONTIER_EDGES as u64,
            });
        }
        let mut next: BTreeMap<u64, (KahanSum, u128)> = BTreeMap::new();
        for (&key, &(value, count)) in &states {
            let mut local = 0u32;
            for &(k, slot) in &closing {
                if key >> slot & 1 == 1 {
                    local |= 1 << k;
                }
            }
            let mut base = 0u64;
            for (j, &s) in kept.iter().enumerate() {
                base |= (key >> s & 1) << j;
            }
            let value = value.value();
            for sub in 0u32..(1 << opening.len()) {
                let mut mask = local;
                let mut new_key = base;
                for (j, &(k, _)) in opening.iter().enumerate() {
                    if sub >> j & 1 == 1 {
                        mask |= 1 << k;
                        new_key |= 1 << (kept.len() + j);
                    }
                }
                if mask.count_ones() == 1 {
                    continue;
                }
                let factor = if mask == 0 { 1.0 } else { table.factor(x, mask) };
                let entry = next.entry(new_key).or_insert((KahanSum::new(0.0), 0));
                entry.0.add(value * factor);
                entry.1 += count;
            }
        }
        if next.len() as u64 > budget {
            return Err(Error::BudgetExceeded {
                what: "loop-sum contraction states".into(),
                limit: budget,
            });
        }
        states = next;
        open = next_open;
        done[x] = true;
    }
    let (value, count) = states.get(&0).copied().unwrap_or((KahanSum::new(0.0), 1));
    Ok(LoopSumReport {
        value: value.value(),
        loop_count: u64::try_from(count - 1).unwrap_or(u64::MAX),
    })
}

/// `1 + sum_g K(g)` over all generalized loops.
pub fn loop_sum(graph: &FactorGraph, messages: &MessageSet, budget: u64) -> Result<LoopSumReport> {
    contract_loop_sum(graph, &ActivityTable::new(graph, messages)?, budget)
}

/// Polymer count up to which [`verify_loop_identity`] also checks that loop
/// activities factorise over their polymers.
pub const FACTORIZATION_POLYMER_CAP: usize = 500;
const FACTORIZATION_LOOP_BUDGET: u64 = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub ln_z_exact: f64,
    pub f_bethe: f64,
    pub loop_sum: f64,
    pub ln_loop_sum: f64,
    /// `|ln Z - n f_bethe - ln(loop sum)|`.
    pub residual: f64,
    pub bp_residual: f64,
    pub loop_count: u64,
    pub polymer_count: usize,
    /// Largest `|K(g) - prod_k K(gamma_k)|` over disjoint polymer unions, when
    /// the polymer count is small enough to list them.
    pub factorization_error: Option<f64>,
    /// Largest `|K(g)|` over subgraphs with a dangling edge.
    pub max_dangling_activity: f64,
    /// Whether the dangling maximum ran over every edge subset (otherwise over
    /// single-edge node factors only).
    pub dangling_exhaustive: bool,
}

fn ln_checked(x: f64, what: &str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x.ln())
    } else {
        Err(Error::LogDomain(format!("{what} = {x}")))
    }
}

/// Checks `Z = exp(n f_bethe) (1 + sum_g K(g))` against brute force.
pub fn verify_loop_identity(graph: &FactorGraph, messages: &MessageSet) -> Result<IdentityReport> {
    verify_loop_identity_with_budget(graph, messages, DEFAULT_ENUMERATION_BUDGET)
}

pub fn verify_loop_identity_with_budget(
    graph: &FactorGraph,
    messages: &MessageSet,
    budget: u64,
) -> Result<IdentityReport> {
    let exact = brute_force_log_partition(graph)?;
    let bethe = bethe_free_energy(graph, messages)?;
    let table = ActivityTable::new(graph, messages)?;
    let sum = contract_loop_sum(graph, &table, budget)?;
    let polymers = enumerate_polymers_with_budget(graph, graph.num_nodes(), budget)?;
    let factorization_error = if polymers.len() <= FACTORIZATION_POLYMER_CAP {
        let k: Vec<f64> = polymers.iter().map(|p| table.polymer_activity(p)).collect();
        let mut worst = 0.0f64;
        let listed = visit_compositions(&polymers, FACTORIZATION_LOOP_BUDGET, |idx| {
            if idx.len() > 1 {
                let product: f64 = idx.iter().map(|&j| k[j]).product();
                let edges: Vec<usize> = idx
                    .iter()
                    .flat_map(|&j| polymers[j].subgraph.edges.iter().copied())
                    .collect();
                let direct = table.subgraph_activity(graph, &LoopSubgraph::from_edges(graph, &edges));
                worst = worst.max((direct - product).abs());
            }
        });
        listed.ok().map(|_| worst)
    } else {
        None
    };
    let (max_dangling_activity, dangling_exhaustive) =
        if graph.num_edges() <= FULL_EXPANSION_EDGE_CAP {
            (full_subset_sum(graph, &table)?.max_dangling, true)
        } else {
            (max_single_edge_factor(graph, &table), false)
        };
    let ln_loop_sum = ln_checked(sum.value, "loop sum")?;
    let n = graph.n() as f64;
    Ok(IdentityReport {
        ln_z_exact: exact.log_z,
        f_bethe: bethe.f_bethe,
        loop_sum: sum.value,
        ln_loop_sum,
        residual: (exact.log_z - n * bethe.f_bethe - ln_loop_sum).abs(),
        bp_residual: residual(graph, messages)?,
        loop_count: sum.loop_count,
        polymer_count: polymers.len(),
        factorization_error,
        max_dangling_activity,
        dangling_exhaustive,
    })
}

fn max_single_edge_factor(graph: &FactorGraph, table: &ActivityTable) -> f64 {
    (0..graph.num_nodes())
        .flat_map(|x| {
            (0..graph.node_edges(x).len()).map(move |k| table.factor(x, 1 << k).abs())
        })
        .fold(0.0, f64::max)
}

struct SubsetSum {
    /// `1 + sum` over all non-empty edge subsets.
    total: f64,
    max_dangling: f64,
}

/// Sum of activities over every edge subset, dangling ones included.
fn full_subset_sum(graph: &FactorGraph, table: &ActivityTable) -> Result<SubsetSum> {
    let e_count = graph.num_edges();
    if e_count > FULL_EXPANSION_EDGE_CAP {
        return Err(Error::BudgetExceeded {
            what: format!("2^{e_count} edge subsets"),
            limit: 1 << FULL_EXPANSION_EDGE_CAP,
        });
    }
    let nodes = graph.num_nodes();
    // For every edge: its two endpoints and the edge's bit in each endpoint's local mask.
    let ends: Vec<[(usize, u32); 2]> = (0..e_count)
        .map(|e| {
            let (u, v) = graph.endpoints(e);
            [
                (u, 1 << graph.edge_pos_at(u, e)),
                (v, 1 << graph.edge_pos_at(v, e)),
            ]
        })
        .collect();
    const CHUNK_BITS: usize = 10;
    let chunk_bits = CHUNK_BITS.min(e_count);
    let chunks = 1u64 << (e_count - chunk_bits);
    let partials: Vec<(f64, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut local = vec![0u32; nodes];
            let mut acc = KahanSum::new(0.0);
            let mut max_dangling = 0.0f64;
            let base = c << chunk_bits;
            for offset in 0..(1u64 << chunk_bits) {
                let mask = base | offset;
                if mask == 0 {
                    continue;
                }
                local.iter_mut().for_each(|m| *m = 0);
                let mut rest = mask;
                while rest != 0 {
                    let e = rest.trailing_zeros() as usize;
                    for &(x, bit) in &ends[e] {
                        local[x] |= bit;
                    }
                    rest &= rest - 1;
                }
                let mut k = 1.0;
                let mut dangling = false;
                for (x, &m) in local.iter().enumerate() {
                    if m != 0 {
                        k *= table.factor(x, m);
                        dangling |= m.count_ones() == 1;
                    }
                }
                acc.add(k);
                if dangling {
                    max_dangling = max_dangling.max(k.abs());
                }
            }
            (acc.sum, acc.comp, max_dangling)
        })
        .collect();
    let mut total = KahanSum::new(1.0);
    let mut max_dangling = 0.0f64;
    for (s, comp, md) in partials {
        total.add(s);
        total.add(-comp);
        max_dangling = max_dangling.max(md);
    }
    Ok(SubsetSum {
        total: total.value(),
        max_dangling,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullExpansionReport {
    pub ln_z_exact: f64,
    pub f_bethe: f64,
    /// `1 + sum` over every non-empty edge subset.
    pub subset_sum: f64,
    pub residual: f64,
    pub max_dangling_activity: f64,
}

/// The expansion over all edge subsets holds at arbitrary messages.
pub fn verify_full_expansion(graph: &FactorGraph, messages: &MessageSet) -> Result<FullExpansionReport> {
    let table = ActivityTable::new(graph, messages)?;
    let sums = full_subset_sum(graph, &table)?;
    let exact = brute_force_log_partition(graph)?;
    let bethe = bethe_free_energy(graph, messages)?;
    let ln_sum = ln_checked(sums.total, "subset sum")?;
    Ok(FullExpansionReport {
        ln_z_exact: exact.log_z,
        f_bethe: bethe.f_bethe,
        subset_sum: sums.total,
        residual: (exact.log_z - graph.n() as f64 * bethe.f_bethe - ln_sum).abs(),
        max_dangling_activity: sums.max_dangling,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallLargeSplit {
    /// `1 + sum` over loops whose polymers all have `|gamma| < lambda n`.
    pub z_small: f64,
    pub r_large: f64,
    pub loop_sum: f64,
}

/// Splits the loop sum by polymer size at the threshold `lambda n`: small loops
/// are listed as unions of small polymers, the rest is the contracted total minus them.
pub fn split_small_large(
    graph: &FactorGraph,
    messages: &MessageSet,
    lambda: f64,
    budget: u64,
) -> Result<SmallLargeSplit> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda}")));
    }
    let threshold = lambda * graph.n() as f64;
    let table = ActivityTable::new(graph, messages)?;
    let total = contract_loop_sum(graph, &table, budget)?.value;
    let below = threshold.ceil() as usize;
    let max_small = below.saturating_sub(1).min(graph.num_nodes());
    let polymers: Vec<Polymer> = enumerate_polymers_with_budget(graph, max_small, budget)?
        .into_iter()
        .filter(|p| (p.size() as f64) < threshold)
        .collect();
    let k: Vec<f64> = polymers.iter().map(|p| table.polymer_activity(p)).collect();
    let mut small = KahanSum::new(1.0);
    visit_compositions(&polymers, budget, |idx| {
        small.add(idx.iter().map(|&j| k[j]).product());
    })?;
    Ok(SmallLargeSplit {
        z_small: small.value(),
        r_large: total - small.value(),
        loop_sum: total,
    })
}
