//! Random Tanner graphs from the configuration model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::graph::{FactorGraph, WeightSpec};

/// Restart budget used by the samplers unless overridden.
pub const DEFAULT_RESTARTS: usize = 200_000;

/// Pairs half-edges uniformly at random, restarting whenever a double edge appears.
pub fn configuration_model(
    var_degrees: &[usize],
    check_degrees: &[usize],
    rng: &mut ChaCha8Rng,
    max_restarts: usize,
) -> Result<(Vec<(usize, usize)>, usize)> {
    let var_sockets: Vec<usize> = var_degrees
        .iter()
        .enumerate()
        .flat_map(|(i, &d)| std::iter::repeat(i).take(d))
        .collect();
    let mut check_sockets: Vec<usize> = check_degrees
        .iter()
        .enumerate()
        .flat_map(|(a, &d)| std::iter::repeat(a).take(d))
        .collect();
    if var_sockets.len() != check_sockets.len() {
        return Err(Error::InfeasibleDegreeSequence(format!(
            "{} variable half-edges vs {} check half-edges",
            var_sockets.len(),
            check_sockets.len()
        )));
    }
    let m = check_degrees.len();
    let mut used = vec![false; var_degrees.len() * m.max(1)];
    for attempt in 0..=max_restarts {
        check_sockets.shuffle(rng);
        used.iter_mut().for_each(|u| *u = false);
        let mut ok = true;
        for (&i, &a) in var_sockets.iter().zip(&check_sockets) {
            let slot = i * m + a;
            if used[slot] {
                ok = false;
                break;
            }
            used[slot] = true;
        }
        if ok {
            let edges = var_sockets
                .iter()
                .zip(&check_sockets)
                .map(|(&i, &a)| (i, a))
                .collect();
            return Ok((edges, attempt));
        }
    }
    Err(Error::RejectionBudgetExceeded {
        attempts: max_restarts,
    })
}

/// Samples from the `(l, r)`-regular ensemble with `n` variables and zero LDPC fields.
pub fn sample_regular_bipartite(l: usize, r: usize, n: usize, seed: u64) -> Result<FactorGraph> {
    sample_regular_bipartite_with_budget(l, r, n, seed, DEFAULT_RESTARTS)
}

pub fn sample_regular_bipartite_with_budget(
    l: usize,
    r: usize,
    n: usize,
    seed: u64,
    max_restarts: usize,
) -> Result<FactorGraph> {
    if l == 0 || r == 0 {
        return Err(Error::InvalidParameter("degrees must be at least 1".into()));
    }
    if (n * l) % r != 0 {
        return Err(Error::Divisibility { edges: n * l, r });
    }
    let m = n * l / r;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (edges, restarts) = configuration_model(&vec![l; n], &vec![r; m], &mut rng, max_restarts)?;
    Ok(FactorGraph::build(n, m, &edges, WeightSpec::ldpc_zero(n))?
        .with_meta("ensemble", json!("regular"))
        .with_meta("l", json!(l))
        .with_meta("r", json!(r))
        .with_meta("seed", json!(seed))
        .with_meta("restarts", json!(restarts)))
}

/// Integer counts summing to `total` that best match `total * fractions`.
/// Leftover units go to the largest fractional parts, ties to the smaller degree.
pub fn largest_remainder(total: usize, dist: &[(usize, f64)]) -> Vec<(usize, usize)> {
    let mut entries: Vec<(usize, f64)> = dist.to_vec();
    entries.sort_by_key(|e| e.0);
    let exact: Vec<f64> = entries.iter().map(|&(_, w)| w * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&x, &y| {
        let fx = exact[x] - counts[x] as f64;
        let fy = exact[y] - counts[y] as f64;
        fy.partial_cmp(&fx).unwrap().then(x.cmp(&y))
    });
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    entries.iter().zip(counts).map(|(&(d, _), c)| (d, c)).collect()
}

fn validate_distribution(name: &str, dist: &[(usize, f64)]) -> Result<()> {
    if dist.is_empty() || dist.iter().any(|&(_, w)| !(w >= 0.0)) {
        return Err(Error::InfeasibleDegreeSequence(format!(
            "{name} must be a non-empty probability vector"
        )));
    }
    let total: f64 = dist.iter().map(|e| e.1).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InfeasibleDegreeSequence(format!(
            "{name} sums to {total}, not 1"
        )));
    }
    Ok(())
}

/// Samples a Tanner graph with variable-degree fractions `lambda` and check-degree
/// fractions `p_dist`; weights are zero LDGM fields.
pub fn sample_ldgm(
    lambda: &[(usize, f64)],
    p_dist: &[(usize, f64)],
    n: usize,
    seed: u64,
) -> Result<FactorGraph> {
    validate_distribution("lambda", lambda)?;
    validate_distribution("P", p_dist)?;
    let var_counts = largest_remainder(n, lambda);
    let edges_total: usize = var_counts.iter().map(|&(s, c)| s * c).sum();
    let mean_check: f64 = p_dist.iter().map(|&(t, w)| t as f64 * w).sum();
    if mean_check <= 0.0 {
        return Err(Error::InfeasibleDegreeSequence("mean check degree is zero".into()));
    }
    let guess = (edges_total as f64 / mean_check).round() as i64;
    let mut chosen = None;
    for delta in [0i64, -1, 1, -2, 2] {
        let m = guess + delta;
        if m <= 0 {
            continue;
        }
        let counts = largest_remainder(m as usize, p_dist);
        if counts.iter().map(|&(t, c)| t * c).sum::<usize>() == edges_total {
            chosen = Some((m as usize, counts));
            break;
        }
    }
    let (m, check_counts) = chosen.ok_or_else(|| {
        Error::InfeasibleDegreeSequence(format!(
            "no check count realises {edges_total} edges with the requested fractions"
        ))
    })?;
    let var_degrees: Vec<usize> = var_counts
        .iter()
        .flat_map(|&(s, c)| std::iter::repeat(s).take(c))
        .collect();
    let check_degrees: Vec<usize> = check_counts
        .iter()
        .flat_map(|&(t, c)| std::iter::repeat(t).take(c))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (edges, restarts) =
        configuration_model(&var_degrees, &check_degrees, &mut rng, DEFAULT_RESTARTS)?;
    let to_json = |v: &[(usize, usize)]| -> Value {
        v.iter().map(|&(d, c)| json!([d, c])).collect()
    };
    Ok(
        FactorGraph::build(n, m, &edges, WeightSpec::Ldgm { fields: vec![0.0; m] })?
            .with_meta("ensemble", json!("ldgm"))
            .with_meta("rounding", json!("largest-remainder"))
            .with_meta("var_degree_counts", to_json(&var_counts))
            .with_meta("check_degree_counts", to_json(&check_counts))
            .with_meta("design_rate", json!(n as f64 / m as f64))
            .with_meta("seed", json!(seed))
            .with_meta("restarts", json!(restarts)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_sample_has_exact_degrees() {
        let g = sample_regular_bipartite(3, 6, 12, 7).unwrap();
        assert_eq!(g.m(), 6);
        assert_eq!(g.regular_degrees(), Some((3, 6)));
    }

    #[test]
    fn divisibility_error() {
        assert!(matches!(
            sample_regular_bipartite(3, 6, 11, 0),
            Err(Error::Divisibility { edges: 33, r: 6 })
        ));
    }

    #[test]
    fn same_seed_same_graph() {
        let a = sample_regular_bipartite(3, 4, 12, 5).unwrap();
        let b = sample_regular_bipartite(3, 4, 12, 5).unwrap();
        assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn ldgm_regular_special_case() {
        let g = sample_ldgm(&[(3, 1.0)], &[(6, 1.0)], 12, 2).unwrap();
        assert_eq!(g.m(), 6);
        assert_eq!(g.regular_degrees(), Some((3, 6)));
        assert_eq!(g.meta()["design_rate"], json!(2.0));
    }

    #[test]
    fn ldgm_forest() {
        let g = sample_ldgm(&[(1, 1.0)], &[(2, 1.0)], 4, 1).unwrap();
        assert_eq!(g.m(), 2);
        assert!(g.is_forest());
    }

    #[test]
    fn ldgm_infeasible_rounding() {
        assert!(matches!(
            sample_ldgm(&[(2, 0.5), (3, 0.5)], &[(2, 1.0)], 3, 0),
            Err(Error::InfeasibleDegreeSequence(_))
        ));
    }

    #[test]
    fn largest_remainder_sums_to_total() {
        let c = largest_remainder(7, &[(2, 0.3), (3, 0.3), (4, 0.4)]);
        assert_eq!(c.iter().map(|e| e.1).sum::<usize>(), 7);
        assert_eq!(c, vec![(2, 2), (3, 2), (4, 3)]);
    }
}
