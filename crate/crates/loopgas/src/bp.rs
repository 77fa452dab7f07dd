//! Belief propagation in the tanh domain with a synchronous schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ChannelParams, FactorGraph, ModelKind, TABLE_DEGREE_CAP};

/// Messages on both orientations of every edge, indexed by edge id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageSet {
    pub kind: ModelKind,
    /// `tanh` of the variable-to-check message `i -> a`.
    pub var_to_check: Vec<f64>,
    /// `tanh` of the check-to-variable message `a -> i`.
    pub check_to_var: Vec<f64>,
}

impl MessageSet {
    pub fn zeros(graph: &FactorGraph) -> Self {
        MessageSet {
            kind: graph.kind(),
            var_to_check: vec![0.0; graph.num_edges()],
            check_to_var: vec![0.0; graph.num_edges()],
        }
    }

    /// Zeros, except `t_{i->a} = tanh h_i` for LDPC.
    pub fn default_init(graph: &FactorGraph) -> Self {
        let mut msgs = Self::zeros(graph);
        if graph.kind() == ModelKind::Ldpc {
            for (e, t) in msgs.var_to_check.iter_mut().enumerate() {
                *t = graph.var_field(graph.edge(e).0).tanh();
            }
        }
        msgs
    }

    /// Sup-norm distance between two message sets.
    pub fn distance(&self, other: &MessageSet) -> f64 {
        self.var_to_check
            .iter()
            .zip(&other.var_to_check)
            .chain(self.check_to_var.iter().zip(&other.check_to_var))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Variable-to-check update: `tanh(h_i + sum_{b != a} atanh t_hat_b)`.
fn var_update(graph: &FactorGraph, i: usize, incoming: &[f64], out: &mut [f64]) {
    let h = graph.var_field(i);
    let edges = graph.var_edges(i);
    let (ep, em) = (h.exp(), (-h).exp());
    for (k, &e) in edges.iter().enumerate() {
        let mut plus = ep;
        let mut minus = em;
        for (j, &f) in edges.iter().enumerate() {
            if j != k {
                plus *= 1.0 + incoming[f];
                minus *= 1.0 - incoming[f];
            }
        }
        let total = plus + minus;
        out[e] = if total > 0.0 { (plus - minus) / total } else { 0.0 };
    }
}

/// Check-to-variable update for one check.
fn check_update(graph: &FactorGraph, a: usize, incoming: &[f64], out: &mut [f64]) {
    let edges = graph.check_edges(a);
    match graph.kind() {
        ModelKind::Ldpc | ModelKind::Ldgm => {
            let scale = match graph.kind() {
                ModelKind::Ldgm => graph.check_field(a).tanh(),
                _ => 1.0,
            };
            for (k, &e) in edges.iter().enumerate() {
                let prod: f64 = edges
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, &f)| incoming[f])
                    .product();
                out[e] = scale * prod;
            }
        }
        ModelKind::General => {
            let d = edges.len();
            for (k, &e) in edges.iter().enumerate() {
                let mut num = 0.0;
                let mut den = 0.0;
                for mask in 0u32..(1 << d) {
                    let mut w = graph.check_weight(a, mask);
                    for (j, &f) in edges.iter().enumerate() {
                        if j != k {
                            let s = if mask >> j & 1 == 1 { -1.0 } else { 1.0 };
                            w *= 1.0 + s * incoming[f];
                        }
                    }
                    den += w;
                    num += if mask >> k & 1 == 1 { -w } else { w };
                }
                out[e] = if den > 0.0 { num / den } else { 0.0 };
            }
        }
    }
}

/// One synchronous update of every directed edge from the previous state.
pub fn bp_sweep(graph: &FactorGraph, messages: &MessageSet) -> Result<MessageSet> {
    if graph.kind() == ModelKind::General {
        for a in 0..graph.m() {
            if graph.check_degree(a) > TABLE_DEGREE_CAP {
                return Err(Error::DegreeTooLarge {
                    node: a,
                    degree: graph.check_degree(a),
                    cap: TABLE_DEGREE_CAP,
                });
            }
        }
    }
    let mut next = MessageSet::zeros(graph);
    for i in 0..graph.n() {
        var_update(graph, i, &messages.check_to_var, &mut next.var_to_check);
    }
    for a in 0..graph.m() {
        check_update(graph, a, &messages.var_to_check, &mut next.check_to_var);
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpParams {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BpParams {
    fn default() -> Self {
        BpParams {
            damping: 0.0,
            tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpOutcome {
    pub messages: MessageSet,
    /// Sup-norm change produced by the undamped update at the last state.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates `t <- (1 - damping) update(t) + damping t` until the undamped
/// update moves no message by more than `tol`.
pub fn solve_fixed_point(
    graph: &FactorGraph,
    init: Option<MessageSet>,
    params: BpParams,
) -> Result<BpOutcome> {
    if !(0.0..1.0).contains(&params.damping) || !(params.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "damping {} must lie in [0, 1) and tol {} be positive",
            params.damping, params.tol
        )));
    }
    let mut state = init.unwrap_or_else(|| MessageSet::default_init(graph));
    if state.var_to_check.len() != graph.num_edges() || state.check_to_var.len() != graph.num_edges() {
        return Err(Error::InvalidParameter("message set does not match graph".into()));
    }
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let update = bp_sweep(graph, &state)?;
        residual = update.distance(&state);
        iterations += 1;
        if residual <= params.tol {
            return Ok(BpOutcome {
                messages: state,
                residual,
                iterations,
                converged: true,
            });
        }
        let d = params.damping;
        for (s, u) in state.var_to_check.iter_mut().zip(&update.var_to_check) {
            *s = (1.0 - d) * u + d * *s;
        }
        for (s, u) in state.check_to_var.iter_mut().zip(&update.check_to_var) {
            *s = (1.0 - d) * u + d * *s;
        }
    }
    Ok(BpOutcome {
        messages: state,
        residual,
        iterations,
        converged: false,
    })
}

/// Sup-norm change of one undamped sweep.
pub fn residual(graph: &FactorGraph, messages: &MessageSet) -> Result<f64> {
    Ok(bp_sweep(graph, messages)?.distance(messages))
}

/// Every variable-to-check message satisfies `|t| <= theta`.
pub fn verify_high_noise(messages: &MessageSet, channel: &ChannelParams) -> bool {
    messages
        .var_to_check
        .iter()
        .all(|t| t.abs() <= channel.theta)
}

/// `|t_{i->a}| <= 2 (l_max - 1) mu` and `|t_hat_{a->i}| <= 2 mu`.
pub fn verify_high_temperature_bounds(messages: &MessageSet, graph: &FactorGraph) -> bool {
    let Some(mu) = graph.mu() else {
        return false;
    };
    let var_bound = 2.0 * (graph.l_max().saturating_sub(1)) as f64 * mu;
    messages.var_to_check.iter().all(|t| t.abs() <= var_bound)
        && messages.check_to_var.iter().all(|t| t.abs() <= 2.0 * mu)
}
