//! Bipartite factor graphs with variable nodes `V` and check nodes `C`.
//!
//! Spins follow `s = (-1)^x`. A local configuration of a node is stored as a
//! bit mask over its incident edges (in adjacency order); bit `k` set means the
//! `k`-th neighbour has `x = 1`, i.e. spin `-1`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Largest check degree for which explicit weight tables are materialised.
pub const TABLE_DEGREE_CAP: usize = 20;

/// A single interaction term `J_I` acting on the variables in `vars`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub vars: Vec<usize>,
    pub j: f64,
}

/// The factor weights attached to a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightSpec {
    /// `psi_a = exp(beta * sum_I J_I prod_{i in I} s_i)` on every check.
    General {
        beta: f64,
        couplings: Vec<Vec<Coupling>>,
    },
    /// `psi_a = exp(h_a prod_{i in da} s_i)`.
    Ldgm { fields: Vec<f64> },
    /// Parity checks `I(prod s = +1)` and variable fields `exp(h_i s_i)`.
    Ldpc { fields: Vec<f64> },
}

/// Model family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    General,
    Ldgm,
    Ldpc,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::General => "general",
            ModelKind::Ldgm => "ldgm",
            ModelKind::Ldpc => "ldpc",
        }
    }
}

impl WeightSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            WeightSpec::General { .. } => ModelKind::General,
            WeightSpec::Ldgm { .. } => ModelKind::Ldgm,
            WeightSpec::Ldpc { .. } => ModelKind::Ldpc,
        }
    }

    /// LDPC weights with every field zero.
    pub fn ldpc_zero(n: usize) -> Self {
        WeightSpec::Ldpc {
            fields: vec![0.0; n],
        }
    }
}

/// A node of the bipartite graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    Var(usize),
    Check(usize),
}

impl std::fmt::Display for Node {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Node::Var(i) => write!(f, "v{i}"),
            Node::Check(a) => write!(f, "c{a}"),
        }
    }
}

/// Immutable Tanner graph together with its weights.
#[derive(Debug, Clone)]
pub struct FactorGraph {
    n: usize,
    m: usize,
    edges: Vec<(usize, usize)>,
    var_edges: Vec<Vec<usize>>,
    check_edges: Vec<Vec<usize>>,
    pos_in_var: Vec<usize>,
    pos_in_check: Vec<usize>,
    weights: WeightSpec,
    coupling_masks: Vec<Vec<(u32, f64)>>,
    meta: BTreeMap<String, Value>,
}

impl FactorGraph {
    /// Validates and builds a graph. Edges are `(variable, check)` pairs in any order.
    pub fn build(
        n: usize,
        m: usize,
        edges: &[(usize, usize)],
        weights: WeightSpec,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(i, a) in edges {
            if i >= n || a >= m {
                return Err(Error::IndexOutOfRange {
                    var: i,
                    check: a,
                    n,
                    m,
                });
            }
            if !seen.insert((a, i)) {
                return Err(Error::DuplicateEdge { var: i, check: a });
            }
        }
        let sorted: Vec<(usize, usize)> = seen.into_iter().map(|(a, i)| (i, a)).collect();
        let mut var_edges = vec![Vec::new(); n];
        let mut check_edges = vec![Vec::new(); m];
        for (e, &(i, a)) in sorted.iter().enumerate() {
            check_edges[a].push(e);
            var_edges[i].push(e);
        }
        for list in var_edges.iter_mut() {
            list.sort_by_key(|&e| sorted[e].1);
        }
        let mut pos_in_var = vec![0; sorted.len()];
        let mut pos_in_check = vec![0; sorted.len()];
        for list in &var_edges {
            for (k, &e) in list.iter().enumerate() {
                pos_in_var[e] = k;
            }
        }
        for list in &check_edges {
            for (k, &e) in list.iter().enumerate() {
                pos_in_check[e] = k;
            }
        }
        let mut graph = FactorGraph {
            n,
            m,
            edges: sorted,
            var_edges,
            check_edges,
            pos_in_var,
            pos_in_check,
            weights: WeightSpec::ldpc_zero(n),
            coupling_masks: Vec::new(),
            meta: BTreeMap::new(),
        };
        graph.set_weights(weights)?;
        Ok(graph)
    }

    fn set_weights(&mut self, weights: WeightSpec) -> Result<()> {
        let mut coupling_masks = Vec::new();
        match &weights {
            WeightSpec::Ldpc { fields } => {
                if fields.len() != self.n {
                    return Err(Error::InconsistentWeights(format!(
                        "{} LDPC fields for {} variables",
                        fields.len(),
                        self.n
                    )));
                }
                if fields.iter().any(|h| !h.is_finite()) {
                    return Err(Error::InconsistentWeights("non-finite field".into()));
                }
            }
            WeightSpec::Ldgm { fields } => {
                if fields.len() != self.m {
                    return Err(Error::InconsistentWeights(format!(
                        "{} LDGM fields for {} checks",
                        fields.len(),
                        self.m
                    )));
                }
                if fields.iter().any(|h| !h.is_finite()) {
                    return Err(Error::InconsistentWeights("non-finite field".into()));
                }
            }
            WeightSpec::General { beta, couplings } => {
                if !(beta.is_finite() && *beta > 0.0) {
                    return Err(Error::InconsistentWeights(format!(
                        "beta must be positive, got {beta}"
                    )));
                }
                if couplings.len() != self.m {
                    return Err(Error::InconsistentWeights(format!(
                        "{} coupling lists for {} checks",
                        couplings.len(),
                        self.m
                    )));
                }
                for (a, list) in couplings.iter().enumerate() {
                    let degree = self.check_edges[a].len();
                    if degree > TABLE_DEGREE_CAP {
                        return Err(Error::DegreeTooLarge {
                            node: a,
                            degree,
                            cap: TABLE_DEGREE_CAP,
                        });
                    }
                    let mut masks = Vec::with_capacity(list.len());
                    for c in list {
                        if !c.j.is_finite() {
                            return Err(Error::InconsistentWeights("non-finite coupling".into()));
                        }
                        let mut mask = 0u32;
                        for &i in &c.vars {
                            let pos = self.check_edges[a]
                                .iter()
                                .position(|&e| self.edges[e].0 == i)
                                .ok_or_else(|| {
                                    Error::InconsistentWeights(format!(
                                        "coupling on check {a} names variable {i} outside its neighbourhood"
                                    ))
                                })?;
                            if mask & (1 << pos) != 0 {
                                return Err(Error::InconsistentWeights(format!(
                                    "variable {i} repeated in a coupling on check {a}"
                                )));
                            }
                            mask |= 1 << pos;
                        }
                        masks.push((mask, c.j));
                    }
                    coupling_masks.push(masks);
                }
            }
        }
        self.weights = weights;
        self.coupling_masks = coupling_masks;
        Ok(())
    }

    /// Same topology with different weights.
    pub fn with_weights(&self, weights: WeightSpec) -> Result<Self> {
        let mut g = self.clone();
        g.set_weights(weights)?;
        Ok(g)
    }

    pub fn with_meta(mut self, key: &str, value: Value) -> Self {
        self.meta.insert(key.to_string(), value);
        self
    }

    pub fn meta(&self) -> &BTreeMap<String, Value> {
        &self.meta
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(variable, check)`, sorted by `(check, variable)`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    /// Edge ids incident to variable `i`, ordered by check index.
    pub fn var_edges(&self, i: usize) -> &[usize] {
        &self.var_edges[i]
    }

    /// Edge ids incident to check `a`, ordered by variable index.
    pub fn check_edges(&self, a: usize) -> &[usize] {
        &self.check_edges[a]
    }

    pub fn pos_in_var(&self, e: usize) -> usize {
        self.pos_in_var[e]
    }

    pub fn pos_in_check(&self, e: usize) -> usize {
        self.pos_in_check[e]
    }

    pub fn var_degree(&self, i: usize) -> usize {
        self.var_edges[i].len()
    }

    pub fn check_degree(&self, a: usize) -> usize {
        self.check_edges[a].len()
    }

    pub fn l_max(&self) -> usize {
        self.var_edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn r_max(&self) -> usize {
        self.check_edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `Some((l, r))` when every variable has degree `l` and every check degree `r`.
    pub fn regular_degrees(&self) -> Option<(usize, usize)> {
        let l = self.var_edges.first()?.len();
        let r = self.check_edges.first()?.len();
        let ok = self.var_edges.iter().all(|v| v.len() == l)
            && self.check_edges.iter().all(|c| c.len() == r);
        ok.then_some((l, r))
    }

    pub fn weights(&self) -> &WeightSpec {
        &self.weights
    }

    pub fn kind(&self) -> ModelKind {
        self.weights.kind()
    }

    /// Field `h_i` on a variable; zero outside the LDPC family.
    pub fn var_field(&self, i: usize) -> f64 {
        match &self.weights {
            WeightSpec::Ldpc { fields } => fields[i],
            _ => 0.0,
        }
    }

    /// Field `h_a` of an LDGM check; zero otherwise.
    pub fn check_field(&self, a: usize) -> f64 {
        match &self.weights {
            WeightSpec::Ldgm { fields } => fields[a],
            _ => 0.0,
        }
    }

    /// `ln psi_a` at a local configuration mask; `-inf` for violated parity checks.
    pub fn check_log_weight(&self, a: usize, mask: u32) -> f64 {
        match &self.weights {
            WeightSpec::Ldpc { .. } => {
                if mask.count_ones() % 2 == 0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            WeightSpec::Ldgm { fields } => {
                if mask.count_ones() % 2 == 0 {
                    fields[a]
                } else {
                    -fields[a]
                }
            }
            WeightSpec::General { beta, .. } => {
                let mut acc = 0.0;
                for &(bits, j) in &self.coupling_masks[a] {
                    if (mask & bits).count_ones() % 2 == 0 {
                        acc += j;
                    } else {
                        acc -= j;
                    }
                }
                beta * acc
            }
        }
    }

    pub fn check_weight(&self, a: usize, mask: u32) -> f64 {
        self.check_log_weight(a, mask).exp()
    }

    /// `mu = 2 beta sup_a sum_I |J_I|` for general weights, `2 sup_a |h_a|` for LDGM.
    pub fn mu(&self) -> Option<f64> {
        match &self.weights {
            WeightSpec::General { beta, couplings } => {
                let sup = couplings
                    .iter()
                    .map(|list| list.iter().map(|c| c.j.abs()).sum::<f64>())
                    .fold(0.0, f64::max);
                Some(2.0 * beta * sup)
            }
            WeightSpec::Ldgm { fields } => {
                Some(2.0 * fields.iter().map(|h| h.abs()).fold(0.0, f64::max))
            }
            WeightSpec::Ldpc { .. } => None,
        }
    }

    /// Global index of a node: variables first, then checks.
    pub fn node_index(&self, node: Node) -> usize {
        match node {
            Node::Var(i) => i,
            Node::Check(a) => self.n + a,
        }
    }

    pub fn node_from_index(&self, idx: usize) -> Node {
        if idx < self.n {
            Node::Var(idx)
        } else {
            Node::Check(idx - self.n)
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n + self.m
    }

    /// Edge ids incident to a node given by global index.
    pub fn node_edges(&self, idx: usize) -> &[usize] {
        if idx < self.n {
            &self.var_edges[idx]
        } else {
            &self.check_edges[idx - self.n]
        }
    }

    /// Position of edge `e` in the adjacency list of the node with global index `idx`.
    pub fn edge_pos_at(&self, idx: usize, e: usize) -> usize {
        if idx < self.n {
            self.pos_in_var[e]
        } else {
            self.pos_in_check[e]
        }
    }

    /// Global indices of the two endpoints of an edge.
    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        let (i, a) = self.edges[e];
        (i, self.n + a)
    }

    /// True when the graph has no cycle.
    pub fn is_forest(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.num_nodes()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in 0..self.edges.len() {
            let (u, v) = self.endpoints(e);
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru == rv {
                return false;
            }
            parent[ru] = rv;
        }
        true
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&GraphFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        file.into_graph()
    }
}

/// On-disk representation of a [`FactorGraph`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub m: usize,
    pub edges: Vec<[usize; 2]>,
    pub weights: WeightSpec,
    #[serde(default)]
    pub meta: BTreeMap<String, Value>,
}

impl From<&FactorGraph> for GraphFile {
    fn from(g: &FactorGraph) -> Self {
        GraphFile {
            n: g.n,
            m: g.m,
            edges: g.edges.iter().map(|&(i, a)| [i, a]).collect(),
            weights: g.weights.clone(),
            meta: g.meta.clone(),
        }
    }
}

impl GraphFile {
    pub fn into_graph(self) -> Result<FactorGraph> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut g = FactorGraph::build(self.n, self.m, &edges, self.weights)?;
        g.meta = self.meta;
        Ok(g)
    }
}

/// Binary symmetric channel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub p: f64,
    pub h: f64,
    pub epsilon: f64,
    pub theta: f64,
}

impl ChannelParams {
    pub fn from_p(p: f64, epsilon: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 0.5) {
            return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1/2]")));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} < 0")));
        }
        let h = half_log_likelihood(p);
        Ok(ChannelParams {
            p,
            h,
            epsilon,
            theta: (1.0 + epsilon) * h.tanh(),
        })
    }

    pub fn from_h(h: f64, epsilon: f64) -> Result<Self> {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("h = {h} must be >= 0")));
        }
        Self::from_p(1.0 / (1.0 + (2.0 * h).exp()), epsilon).map(|mut c| {
            c.h = h;
            c.theta = (1.0 + epsilon) * h.tanh();
            c
        })
    }
}

/// `h = 1/2 ln((1-p)/p)`.
pub fn half_log_likelihood(p: f64) -> f64 {
    0.5 * ((1.0 - p) / p).ln()
}

/// Natural-log binary entropy.
pub fn h2(x: f64) -> f64 {
    let t = |v: f64| if v <= 0.0 { 0.0 } else { -v * v.ln() };
    t(x) + t(1.0 - x)
}
