//! Bethe free energy as a function of the messages.

use serde::{Deserialize, Serialize};

use crate::bp::MessageSet;
use crate::error::{Error, Result};
use crate::graph::{FactorGraph, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetheBreakdown {
    pub f_bethe: f64,
    pub check_terms: Vec<f64>,
    pub var_terms: Vec<f64>,
    pub edge_terms: Vec<f64>,
}

fn checked_ln(x: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x.ln())
    } else {
        Err(Error::LogDomain(what()))
    }
}

fn check_term(graph: &FactorGraph, a: usize, t: &[f64]) -> Result<f64> {
    let edges = graph.check_edges(a);
    let what = || format!("check term of c{a}");
    match graph.kind() {
        ModelKind::Ldpc => {
            let prod: f64 = edges.iter().map(|&e| t[e]).product();
            Ok(checked_ln(1.0 + prod, what)? - std::f64::consts::LN_2)
        }
        ModelKind::Ldgm => {
            let h = graph.check_field(a);
            let prod: f64 = edges.iter().map(|&e| t[e]).product();
            Ok(checked_ln(1.0 + h.tanh() * prod, what)? + h.cosh().ln())
        }
        ModelKind::General => {
            let d = edges.len();
            let mut total = 0.0;
            for mask in 0u32..(1 << d) {
                let mut w = graph.check_weight(a, mask);
                for (j, &e) in edges.iter().enumerate() {
                    let s = if mask >> j & 1 == 1 { -1.0 } else { 1.0 };
                    w *= 0.5 * (1.0 + s * t[e]);
                }
                total += w;
            }
            checked_ln(total, what)
        }
    }
}

fn var_term(graph: &FactorGraph, i: usize, t_hat: &[f64]) -> Result<f64> {
    let h = graph.var_field(i);
    let mut plus = h.exp();
    let mut minus = (-h).exp();
    for &e in graph.var_edges(i) {
        plus *= 1.0 + t_hat[e];
        minus *= 1.0 - t_hat[e];
    }
    checked_ln(plus + minus, || format!("variable term of v{i}"))
}

/// Evaluates the Bethe free energy per variable at arbitrary messages.
pub fn bethe_free_energy(graph: &FactorGraph, messages: &MessageSet) -> Result<BetheBreakdown> {
    if graph.n() == 0 {
        return Err(Error::InvalidParameter("graph has no variables".into()));
    }
    let t = &messages.var_to_check;
    let t_hat = &messages.check_to_var;
    let check_terms = (0..graph.m())
        .map(|a| check_term(graph, a, t))
        .collect::<Result<Vec<_>>>()?;
    let var_terms = (0..graph.n())
        .map(|i| var_term(graph, i, t_hat))
        .collect::<Result<Vec<_>>>()?;
    let edge_terms = (0..graph.num_edges())
        .map(|e| checked_ln(1.0 + t[e] * t_hat[e], || format!("edge term of e{e}")))
        .collect::<Result<Vec<_>>>()?;
    let total = check_terms.iter().sum::<f64>() + var_terms.iter().sum::<f64>()
        - edge_terms.iter().sum::<f64>();
    Ok(BetheBreakdown {
        f_bethe: total / graph.n() as f64,
        check_terms,
        var_terms,
        edge_terms,
    })
}

fn slot(m: &mut MessageSet, side: usize, e: usize) -> &mut f64 {
    if side == 0 {
        &mut m.var_to_check[e]
    } else {
        &mut m.check_to_var[e]
    }
}

/// Largest central-difference derivative of the Bethe free energy with respect
/// to any message, taken in the `atanh` domain.
pub fn stationarity_check(graph: &FactorGraph, messages: &MessageSet, fd_step: f64) -> Result<f64> {
    if !(fd_step > 0.0 && fd_step < 1.0) {
        return Err(Error::InvalidParameter(format!("fd_step = {fd_step}")));
    }
    for &v in messages.var_to_check.iter().chain(&messages.check_to_var) {
        if v.abs() >= 1.0 - fd_step {
            return Err(Error::BoundaryTooClose { value: v, step: fd_step });
        }
    }
    let mut work = messages.clone();
    let mut worst = 0.0f64;
    for side in 0..2 {
        for e in 0..graph.num_edges() {
            let original = *slot(&mut work, side, e);
            let x = original.atanh();
            *slot(&mut work, side, e) = (x + fd_step).tanh();
            let up = bethe_free_energy(graph, &work)?.f_bethe;
            *slot(&mut work, side, e) = (x - fd_step).tanh();
            let down = bethe_free_energy(graph, &work)?.f_bethe;
            *slot(&mut work, side, e) = original;
            worst = worst.max(((up - down) / (2.0 * fd_step)).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightSpec;
    use std::f64::consts::LN_2;

    #[test]
    fn single_check_hand_value() {
        let g = FactorGraph::build(2, 1, &[(0, 0), (1, 0)], WeightSpec::ldpc_zero(2)).unwrap();
        let b = bethe_free_energy(&g, &MessageSet::zeros(&g)).unwrap();
        assert!((b.check_terms[0] + LN_2).abs() < 1e-15);
        assert!(b.var_terms.iter().all(|v| (v - LN_2).abs() < 1e-15));
        assert!((b.f_bethe - 0.5 * LN_2).abs() < 1e-15);
    }

    #[test]
    fn log_domain_error() {
        let g = FactorGraph::build(2, 1, &[(0, 0), (1, 0)], WeightSpec::ldpc_zero(2)).unwrap();
        let mut m = MessageSet::zeros(&g);
        m.var_to_check = vec![1.0, -1.0];
        assert!(matches!(bethe_free_energy(&g, &m), Err(Error::LogDomain(_))));
    }

    #[test]
    fn boundary_rejected() {
        let g = FactorGraph::build(2, 1, &[(0, 0), (1, 0)], WeightSpec::ldpc_zero(2)).unwrap();
        let mut m = MessageSet::zeros(&g);
        m.var_to_check[0] = 0.999999999;
        assert!(matches!(
            stationarity_check(&g, &m, 1e-5),
            Err(Error::BoundaryTooClose { .. })
        ));
    }
}
