//! Upper bounds on activities and machine checks of their hypotheses.

use serde::{Deserialize, Serialize};

use crate::bp::{verify_high_temperature_bounds, MessageSet};
use crate::error::{Error, Result};
use crate::expander::ExpanderParams;
use crate::graph::{FactorGraph, ModelKind};
use crate::loops::{LoopSubgraph, TypeVector};

/// Constant of the check-node factor in the high-noise bound.
pub const ALPHA1: f64 = 1.1;
/// Constant of the variable-node factor in the high-noise bound.
pub const ALPHA2: f64 = 1.1;
/// Largest `theta` for which the high-noise bound is asserted.
pub const HIGH_NOISE_THETA_MAX: f64 = 0.1;
/// Largest `theta` for which the expander bound is asserted.
pub const EXPANDER_THETA_MAX: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    HighTemperature,
    LdgmTrivial,
    LdpcHighNoise,
    Expander,
}

/// Parameters selecting a bound family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundParams {
    /// `(6 e mu)^{2|g|/(2 + r_max)}`; LDGM uses `mu = 2 sup |h_a|`.
    HighTemperature,
    /// `(sup tanh |h_a|)^{|g cap C|}` at the all-zero LDGM fixed point.
    LdgmTrivial,
    /// The type-vector bound for regular LDPC at a high-noise fixed point.
    LdpcHighNoise { theta: f64 },
    /// `theta^{(c/2)|gamma|}` on a certified expander.
    Expander {
        theta: f64,
        params: ExpanderParams,
        certified: bool,
    },
}

impl BoundParams {
    pub fn kind(&self) -> BoundKind {
        match self {
            BoundParams::HighTemperature => BoundKind::HighTemperature,
            BoundParams::LdgmTrivial => BoundKind::LdgmTrivial,
            BoundParams::LdpcHighNoise { .. } => BoundKind::LdpcHighNoise,
            BoundParams::Expander { .. } => BoundKind::Expander,
        }
    }
}

fn not_met(msg: impl Into<String>) -> Error {
    Error::HypothesisNotMet(msg.into())
}

pub fn high_temperature_bound(mu: f64, size: usize, r_max: usize) -> f64 {
    (6.0 * std::f64::consts::E * mu).powf(2.0 * size as f64 / (2.0 + r_max as f64))
}

/// Returns `mu` when `mu < 1/(2 l_max^2 r_max)` and the fixed-point message bounds hold.
pub fn high_temperature_hypotheses(graph: &FactorGraph, messages: &MessageSet) -> Result<f64> {
    let mu = graph
        .mu()
        .ok_or_else(|| not_met("high-temperature bound needs general or LDGM weights"))?;
    let limit = 1.0 / (2.0 * (graph.l_max() * graph.l_max() * graph.r_max()) as f64);
    if !(mu < limit) {
        return Err(not_met(format!("mu = {mu} is not below {limit}")));
    }
    if !verify_high_temperature_bounds(messages, graph) {
        return Err(not_met("messages violate the high-temperature bounds"));
    }
    Ok(mu)
}

pub fn ldgm_trivial_bound(tanh_h: f64, checks: usize) -> f64 {
    tanh_h.powi(checks as i32)
}

/// Exact activity at the all-zero LDGM fixed point: `prod_a tanh h_a` when every
/// touched check is full and every touched variable has even induced degree.
pub fn ldgm_trivial_activity(graph: &FactorGraph, g: &LoopSubgraph) -> f64 {
    let full = g
        .check_degrees
        .iter()
        .all(|&(a, d)| d == graph.check_degree(a));
    let even = g.var_degrees.iter().all(|&(_, d)| d % 2 == 0);
    if full && even {
        g.check_degrees
            .iter()
            .map(|&(a, _)| graph.check_field(a).tanh())
            .product()
    } else {
        0.0
    }
}

fn ldgm_trivial_hypotheses(graph: &FactorGraph, messages: &MessageSet) -> Result<f64> {
    if graph.kind() != ModelKind::Ldgm {
        return Err(not_met("trivial fixed point needs LDGM weights"));
    }
    if (0..graph.m()).any(|a| graph.check_degree(a) < 2) {
        return Err(not_met("graph has a check of degree below two"));
    }
    if messages
        .var_to_check
        .iter()
        .chain(&messages.check_to_var)
        .any(|&t| t != 0.0)
    {
        return Err(not_met("messages are not the trivial fixed point"));
    }
    Ok((0..graph.m())
        .map(|a| graph.check_field(a).abs().tanh())
        .fold(0.0, f64::max))
}

/// The type-vector bound `K(n, m)` with constants [`ALPHA1`], [`ALPHA2`].
pub fn ldpc_type_bound(r: usize, theta: f64, tv: &TypeVector) -> f64 {
    let mut bound = 1.0;
    for (t, &count) in tv.check_counts.iter().enumerate().skip(2) {
        let factor = if t == r {
            1.0 + ALPHA1 * theta.powi(r as i32)
        } else {
            ALPHA1 * theta.powi(r as i32 - t as i32)
        };
        bound *= factor.powi(count as i32);
    }
    for (s, &count) in tv.var_counts.iter().enumerate().skip(2) {
        let sf = s as f64;
        let factor = if s % 2 == 0 {
            1.0 + ALPHA2 / 2.0 * (1.0 + 4.0 * sf + sf * sf) * theta * theta
        } else {
            ALPHA2 * (1.0 + sf) * theta
        };
        bound *= factor.powi(count as i32);
    }
    bound
}

/// Returns `(l, r)` when the graph is regular LDPC with `r >= 3`, `theta` is
/// within the validity window and the messages are high-noise.
pub fn ldpc_high_noise_hypotheses(
    graph: &FactorGraph,
    messages: &MessageSet,
    theta: f64,
    theta_max: f64,
) -> Result<(usize, usize)> {
    if graph.kind() != ModelKind::Ldpc {
        return Err(not_met("high-noise bound needs LDPC weights"));
    }
    let (l, r) = graph
        .regular_degrees()
        .ok_or_else(|| not_met("graph is not regular"))?;
    if r < 3 {
        return Err(not_met(format!("check degree {r} is below three")));
    }
    if !(theta > 0.0 && theta <= theta_max) {
        return Err(not_met(format!("theta = {theta} outside (0, {theta_max}]")));
    }
    if (0..graph.n()).any(|i| graph.var_field(i).tanh().abs() > theta) {
        return Err(not_met("a field exceeds theta"));
    }
    if messages.var_to_check.iter().any(|t| t.abs() > theta) {
        return Err(not_met("variable-to-check messages exceed theta"));
    }
    let hat_limit = theta.powi(r as i32 - 1);
    if messages.check_to_var.iter().any(|t| t.abs() > hat_limit) {
        return Err(not_met("check-to-variable messages exceed theta^(r-1)"));
    }
    Ok((l, r))
}

pub fn expander_activity_bound(theta: f64, c: f64, size: usize) -> f64 {
    theta.powf(c / 2.0 * size as f64)
}

/// Bound on `|K(g)|` after checking the family's hypotheses for this graph,
/// these messages and this subgraph.
pub fn activity_bound(
    graph: &FactorGraph,
    messages: &MessageSet,
    params: &BoundParams,
    g: &LoopSubgraph,
) -> Result<f64> {
    match params {
        BoundParams::HighTemperature => {
            let mu = high_temperature_hypotheses(graph, messages)?;
            Ok(high_temperature_bound(mu, g.size(), graph.r_max()))
        }
        BoundParams::LdgmTrivial => {
            let tanh_h = ldgm_trivial_hypotheses(graph, messages)?;
            Ok(ldgm_trivial_bound(tanh_h, g.check_degrees.len()))
        }
        BoundParams::LdpcHighNoise { theta } => {
            let (_, r) = ldpc_high_noise_hypotheses(graph, messages, *theta, HIGH_NOISE_THETA_MAX)?;
            Ok(ldpc_type_bound(r, *theta, &g.type_vector()))
        }
        BoundParams::Expander {
            theta,
            params,
            certified,
        } => {
            if !certified {
                return Err(not_met("graph is not a certified expander"));
            }
            ldpc_high_noise_hypotheses(graph, messages, *theta, EXPANDER_THETA_MAX)?;
            if !((g.size() as f64) < params.lambda * graph.n() as f64) {
                return Err(not_met(format!(
                    "|gamma| = {} is not below lambda n = {}",
                    g.size(),
                    params.lambda * graph.n() as f64
                )));
            }
            Ok(expander_activity_bound(*theta, params.c, g.size()))
        }
    }
}

/// Default bound families for a graph: high-temperature for general and LDGM
/// weights, the trivial fixed point for LDGM, and the high-noise bound for LDPC.
pub fn default_bound_candidates(graph: &FactorGraph, theta: f64) -> Vec<BoundParams> {
    match graph.kind() {
        ModelKind::General => vec![BoundParams::HighTemperature],
        ModelKind::Ldgm => vec![BoundParams::HighTemperature, BoundParams::LdgmTrivial],
        ModelKind::Ldpc => vec![BoundParams::LdpcHighNoise { theta }],
    }
}

/// The first candidate whose hypotheses hold, with its value.
pub fn first_applicable_bound(
    graph: &FactorGraph,
    messages: &MessageSet,
    candidates: &[BoundParams],
    g: &LoopSubgraph,
) -> Option<(BoundKind, f64)> {
    candidates
        .iter()
        .find_map(|c| activity_bound(graph, messages, c, g).ok().map(|b| (c.kind(), b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn high_temperature_value() {
        let b = high_temperature_bound(0.01, 4, 6);
        assert!((b - 0.06 * std::f64::consts::E).abs() < 1e-15);
    }

    #[test]
    fn expander_value() {
        let b = expander_activity_bound(0.01, 2.0 / 3.0, 12);
        assert!((b - 1e-8).abs() < 1e-20);
    }

    #[test]
    fn full_checks_even_variables_do_not_decay() {
        let tv = TypeVector {
            var_counts: vec![0, 0, 4],
            check_counts: vec![0, 0, 0, 0, 2],
        };
        assert!(ldpc_type_bound(4, 0.05, &tv) >= 1.0);
    }
}
