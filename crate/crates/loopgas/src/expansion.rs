//! Ursell functions, the polymer expansion of `ln Z`, its convergence
//! criterion, and polymer and tree counts.

use std::collections::HashMap;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activity::{polymer_activities, KahanSum};
use crate::bounds::high_temperature_bound;
use crate::bp::MessageSet;
use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::loops::{enumerate_polymers_with_budget, Polymer};

/// Largest order for Ursell functions and series terms.
pub const MAX_ORDER: usize = 7;

fn pair_bit(j: usize, k: usize) -> u32 {
    let (a, b) = if j < k { (j, k) } else { (k, j) };
    1 << (b * (b - 1) / 2 + a)
}

/// Overlap pattern of `m` slots as a pair bit set.
fn overlap_pattern(m: usize, overlaps: impl Fn(usize, usize) -> bool) -> u32 {
    let mut bits = 0;
    for k in 1..m {
        for j in 0..k {
            if overlaps(j, k) {
                bits |= pair_bit(j, k);
            }
        }
    }
    bits
}

fn is_connected(m: usize, edges: u32) -> bool {
    let mut reached = 1u32;
    loop {
        let mut next = reached;
        for k in 1..m {
            for j in 0..k {
                if edges & pair_bit(j, k) != 0 && (reached >> j & 1 == 1 || reached >> k & 1 == 1) {
                    next |= 1 << j | 1 << k;
                }
            }
        }
        if next == reached {
            return reached.count_ones() as usize == m;
        }
        reached = next;
    }
}

/// Sum over connected spanning subgraphs `G` of the overlap graph of `(-1)^{|E(G)|}`,
/// by subtracting disconnected contributions set by set.
pub fn ursell_from_overlap(m: usize, edges: u32) -> Result<f64> {
    if m == 0 || m > MAX_ORDER {
        return Err(Error::OrderTooLarge { m, max: MAX_ORDER });
    }
    let full = (1usize << m) - 1;
    let mut independent = vec![false; full + 1];
    for (set, flag) in independent.iter_mut().enumerate() {
        *flag = (1..m).all(|k| {
            (0..k).all(|j| {
                !(set >> j & 1 == 1 && set >> k & 1 == 1 && edges & pair_bit(j, k) != 0)
            })
        });
    }
    let mut connected = vec![0.0f64; full + 1];
    for set in 1..=full {
        let low = set & set.wrapping_neg();
        let mut value = if independent[set] { 1.0 } else { 0.0 };
        let rest = set & !low;
        // Proper subsets containing the lowest element.
        let mut sub = rest;
        loop {
            let b = sub | low;
            if b != set {
                let w = if independent[set & !b] { 1.0 } else { 0.0 };
                value -= connected[b] * w;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        connected[set] = value;
    }
    Ok(connected[full])
}

/// Ursell function by direct summation over connected Mayer graphs.
pub fn ursell(polymers: &[&Polymer]) -> Result<f64> {
    let m = polymers.len();
    if m == 0 || m > MAX_ORDER {
        return Err(Error::OrderTooLarge { m, max: MAX_ORDER });
    }
    let overlap = overlap_pattern(m, |j, k| polymers[j].overlaps(polymers[k]));
    Ok(ursell_direct(m, overlap))
}

/// Direct Mayer-graph sum for a given overlap pattern.
pub fn ursell_direct(m: usize, overlap: u32) -> f64 {
    let pairs = m * (m - 1) / 2;
    let mut total = 0i64;
    for graph in 0u32..(1 << pairs) {
        if graph & !overlap != 0 || !is_connected(m, graph) {
            continue;
        }
        total += if graph.count_ones() % 2 == 0 { 1 } else { -1 };
    }
    total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesResult {
    /// `terms[M-1]` is the order-`M` term.
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    pub q: f64,
    pub q_bound: Option<f64>,
    pub size_cutoff: usize,
    pub polymer_count: usize,
    pub z: f64,
}

/// Connected vertex subsets of size at most `max` containing `root` as their
/// smallest element (extension by strictly larger neighbours).
fn connected_subsets(adj: &[Vec<usize>], root: usize, max: usize, visit: &mut impl FnMut(&[usize])) {
    fn extend(
        adj: &[Vec<usize>],
        root: usize,
        max: usize,
        sub: &mut Vec<usize>,
        ext: Vec<usize>,
        visit: &mut impl FnMut(&[usize]),
    ) {
        visit(sub);
        if sub.len() == max {
            return;
        }
        let mut ext = ext;
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for &u in &adj[w] {
                if u > root
                    && !sub.contains(&u)
                    && !next.contains(&u)
                    && !sub.iter().any(|&s| adj[s].binary_search(&u).is_ok())
                {
                    next.push(u);
                }
            }
            sub.push(w);
            extend(adj, root, max, sub, next, visit);
            sub.pop();
        }
    }
    let ext: Vec<usize> = adj[root].iter().copied().filter(|&u| u > root).collect();
    extend(adj, root, max, &mut vec![root], ext, visit);
}

fn compositions(k: usize, total_max: usize, visit: &mut impl FnMut(&[usize])) {
    fn rec(k: usize, left: usize, cur: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        let reserve = k - cur.len() - 1;
        for m in 1..=left.saturating_sub(reserve) {
            cur.push(m);
            rec(k, left - m, cur, visit);
            cur.pop();
        }
    }
    if k <= total_max {
        rec(k, total_max, &mut Vec::new(), visit);
    }
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

/// Series terms from polymers and their activities.
///
/// `term(M) = sum over multisets of M polymers with connected overlap graph of
/// prod K^{m_j} / prod m_j! * U_M`.
pub fn series_from_activities(polymers: &[Polymer], k: &[f64], m_max: usize) -> Result<Vec<f64>> {
    if m_max == 0 || m_max > MAX_ORDER {
        return Err(Error::OrderTooLarge {
            m: m_max,
            max: MAX_ORDER,
        });
    }
    let count = polymers.len();
    let adj: Vec<Vec<usize>> = (0..count)
        .into_par_iter()
        .map(|j| {
            (0..count)
                .filter(|&i| i != j && polymers[i].overlaps(&polymers[j]))
                .collect()
        })
        .collect();
    let per_root: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|root| {
            let mut cache: HashMap<(usize, u32), f64> = HashMap::new();
            let mut terms = vec![KahanSum::new(0.0); m_max];
            connected_subsets(&adj, root, m_max, &mut |sub| {
                compositions(sub.len(), m_max, &mut |mult| {
                    let mut slots = Vec::new();
                    for (idx, &mcount) in mult.iter().enumerate() {
                        slots.extend(std::iter::repeat(sub[idx]).take(mcount));
                    }
                    let order = slots.len();
                    let pattern = overlap_pattern(order, |a, b| {
                        slots[a] == slots[b] || adj[slots[a]].binary_search(&slots[b]).is_ok()
                    });
                    let u = *cache
                        .entry((order, pattern))
                        .or_insert_with(|| ursell_from_overlap(order, pattern).expect("order checked"));
                    if u != 0.0 {
                        let mut w = u;
                        for (idx, &mcount) in mult.iter().enumerate() {
                            w *= k[sub[idx]].powi(mcount as i32) / factorial(mcount);
                        }
                        terms[order - 1].add(w);
                    }
                });
            });
            terms.iter().map(KahanSum::value).collect()
        })
        .collect();
    let mut totals = vec![KahanSum::new(0.0); m_max];
    for root_terms in per_root {
        for (t, v) in totals.iter_mut().zip(root_terms) {
            t.add(v);
        }
    }
    Ok(totals.iter().map(KahanSum::value).collect())
}

/// `sup_x sum_{gamma containing x} e^{|gamma|} |K(gamma)|`.
pub fn q_from_activities(num_nodes: usize, polymers: &[Polymer], k: &[f64]) -> f64 {
    let mut per_node = vec![0.0f64; num_nodes];
    for (p, &kp) in polymers.iter().zip(k) {
        let w = (p.size() as f64).exp() * kp.abs();
        for &(x, _) in &p.node_masks {
            per_node[x] += w;
        }
    }
    per_node.into_iter().fold(0.0, f64::max)
}

/// Truncated polymer expansion of `ln Z^polymer` with activities scaled by `z`.
pub fn polymer_series(
    graph: &FactorGraph,
    messages: &MessageSet,
    m_max: usize,
    size_cutoff: usize,
    z: f64,
    budget: u64,
) -> Result<SeriesResult> {
    let (polymers, k) = polymer_activities(graph, messages, size_cutoff, budget)?;
    let k: Vec<f64> = k.into_iter().map(|v| z * v).collect();
    let terms = series_from_activities(&polymers, &k, m_max)?;
    let mut partial_sums = Vec::with_capacity(terms.len());
    let mut acc = KahanSum::new(0.0);
    for &t in &terms {
        acc.add(t);
        partial_sums.push(acc.value());
    }
    let q = q_from_activities(graph.num_nodes(), &polymers, &k);
    let q_bound = q_bound(graph, &polymers, z);
    Ok(SeriesResult {
        terms,
        partial_sums,
        q,
        q_bound,
        size_cutoff,
        polymer_count: polymers.len(),
        z,
    })
}

/// `Q` with the high-temperature activity bound in place of `|K|`, when `mu` is defined.
fn q_bound(graph: &FactorGraph, polymers: &[Polymer], z: f64) -> Option<f64> {
    let mu = graph.mu()?;
    let bounds: Vec<f64> = polymers
        .iter()
        .map(|p| z.abs() * high_temperature_bound(mu, p.size(), graph.r_max()))
        .collect();
    Some(q_from_activities(graph.num_nodes(), polymers, &bounds))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub q: f64,
    pub q_bound: Option<f64>,
    pub converges: bool,
}

/// The convergence criterion at the given size cutoff.
pub fn convergence_criterion_q(
    graph: &FactorGraph,
    messages: &MessageSet,
    size_cutoff: usize,
    budget: u64,
) -> Result<ConvergenceReport> {
    let (polymers, k) = polymer_activities(graph, messages, size_cutoff, budget)?;
    let q = q_from_activities(graph.num_nodes(), &polymers, &k);
    Ok(ConvergenceReport {
        q,
        q_bound: q_bound(graph, &polymers, 1.0),
        converges: q < 1.0,
    })
}

/// `counts[x][t]`: polymers containing global node `x` touching exactly `t` nodes, `t <= t_max`.
pub fn rooted_polymer_counts(graph: &FactorGraph, t_max: usize, budget: u64) -> Result<Vec<Vec<u64>>> {
    let polymers = enumerate_polymers_with_budget(graph, t_max, budget)?;
    let mut counts = vec![vec![0u64; t_max + 1]; graph.num_nodes()];
    for p in &polymers {
        for &(x, _) in &p.node_masks {
            counts[x][p.size()] += 1;
        }
    }
    Ok(counts)
}

/// Number of polymers containing node `x` with `|gamma| = t`, and the bound `e^{d t}`.
pub fn count_rooted_polymers(graph: &FactorGraph, x: usize, t: usize, budget: u64) -> Result<(u64, f64)> {
    if x >= graph.num_nodes() {
        return Err(Error::InvalidParameter(format!("node {x} out of range")));
    }
    let counts = rooted_polymer_counts(graph, t, budget)?;
    let d = graph.l_max().max(graph.r_max()) as f64;
    Ok((counts[x][t], (d * t as f64).exp()))
}

fn binomial(n: u64, k: u64) -> BigUint {
    let mut acc = BigUint::from(1u32);
    for j in 0..k {
        acc *= n - j;
        acc /= j + 1;
    }
    acc
}

/// Rooted `d`-ary trees with `t` internal nodes: `C(t d, t) / (t (d - 1) + 1)`.
pub fn rooted_dary_tree_count(d: u64, t: u64) -> Result<BigUint> {
    if d < 1 {
        return Err(Error::InvalidParameter("d must be at least 1".into()));
    }
    Ok(binomial(t * d, t) / (t * (d - 1) + 1))
}

/// Labelled trees on `M` vertices with the given degrees: `(M-2)! / prod (t_k - 1)!`.
pub fn cayley_tree_count(degrees: &[usize]) -> Result<BigUint> {
    let m = degrees.len();
    if m < 2 {
        return Err(Error::InvalidDegreeSequence(format!("{m} vertices")));
    }
    if degrees.iter().any(|&t| t < 1) || degrees.iter().sum::<usize>() != 2 * (m - 1) {
        return Err(Error::InvalidDegreeSequence(format!("{degrees:?}")));
    }
    let fact = |k: usize| (1..=k as u64).fold(BigUint::from(1u32), |acc, j| acc * j);
    let den = degrees
        .iter()
        .fold(BigUint::from(1u32), |acc, &t| acc * fact(t - 1));
    Ok(fact(m - 2) / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(m: usize) -> u32 {
        overlap_pattern(m, |_, _| true)
    }

    #[test]
    fn small_ursell_values() {
        assert_eq!(ursell_from_overlap(1, 0).unwrap(), 1.0);
        assert_eq!(ursell_from_overlap(2, 0).unwrap(), 0.0);
        assert_eq!(ursell_from_overlap(2, complete(2)).unwrap(), -1.0);
        assert_eq!(ursell_from_overlap(3, complete(3)).unwrap(), 2.0);
        assert!(matches!(
            ursell_from_overlap(8, 0),
            Err(Error::OrderTooLarge { .. })
        ));
    }

    #[test]
    fn complete_overlap_gives_signed_factorial() {
        for m in 1..=MAX_ORDER {
            let expect = if m % 2 == 1 { 1.0 } else { -1.0 } * factorial(m - 1);
            assert_eq!(ursell_from_overlap(m, complete(m)).unwrap(), expect);
        }
    }

    #[test]
    fn dp_matches_direct_for_all_patterns_up_to_four() {
        for m in 1..=4 {
            let pairs = m * (m - 1) / 2;
            for pattern in 0u32..(1 << pairs) {
                assert_eq!(ursell_from_overlap(m, pattern).unwrap(), ursell_direct(m, pattern));
            }
        }
    }

    #[test]
    fn tree_counts() {
        assert_eq!(rooted_dary_tree_count(2, 0).unwrap(), BigUint::from(1u32));
        assert_eq!(rooted_dary_tree_count(2, 3).unwrap(), BigUint::from(5u32));
        assert_eq!(rooted_dary_tree_count(3, 2).unwrap(), BigUint::from(3u32));
        assert_eq!(cayley_tree_count(&[1, 2, 1]).unwrap(), BigUint::from(1u32));
        assert_eq!(cayley_tree_count(&[3, 1, 1, 1]).unwrap(), BigUint::from(1u32));
        assert!(cayley_tree_count(&[2, 2, 2]).is_err());
    }
}
