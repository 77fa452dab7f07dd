mod common;

use std::f64::consts::LN_2;

use loopgas::channel::expected_free_energy;
use loopgas::ensemble::{sample_ldgm, sample_regular_bipartite};
use loopgas::exact::{
    brute_force_log_partition, codeword_count_gf2, conditional_entropy_ldgm,
    conditional_entropy_ldpc, gf2_rank, parity_rows,
};
use loopgas::graph::{h2, Coupling};
use loopgas::{Error, FactorGraph, WeightSpec};
use proptest::prelude::*;

#[test]
fn free_spin() {
    let g = FactorGraph::build(1, 0, &[], WeightSpec::ldpc_zero(1)).unwrap();
    assert!((brute_force_log_partition(&g).unwrap().log_z - LN_2).abs() < 1e-15);
}

#[test]
fn single_parity_check() {
    let g = FactorGraph::build(2, 1, &[(0, 0), (1, 0)], WeightSpec::ldpc_zero(2)).unwrap();
    assert!((brute_force_log_partition(&g).unwrap().log_z - LN_2).abs() < 1e-15);
    assert_eq!(codeword_count_gf2(&g).unwrap(), 1);
}

#[test]
fn single_ldgm_check_closed_form() {
    let h = 0.37;
    let g = FactorGraph::build(1, 1, &[(0, 0)], WeightSpec::Ldgm { fields: vec![h] }).unwrap();
    let log_z = brute_force_log_partition(&g).unwrap().log_z;
    assert!((log_z - (2.0 * h.cosh()).ln()).abs() < 1e-14);
}

#[test]
fn full_rank_dimension() {
    // Three checks with disjoint supports on six variables.
    let edges = [(0, 0), (1, 0), (2, 1), (3, 1), (4, 2), (5, 2)];
    let g = FactorGraph::build(6, 3, &edges, WeightSpec::ldpc_zero(6)).unwrap();
    assert_eq!(gf2_rank(parity_rows(&g)), 3);
    assert_eq!(codeword_count_gf2(&g).unwrap(), 3);
}

#[test]
fn codeword_count_needs_ldpc() {
    let g = FactorGraph::build(1, 1, &[(0, 0)], WeightSpec::Ldgm { fields: vec![0.1] }).unwrap();
    assert!(matches!(codeword_count_gf2(&g), Err(Error::WrongWeightKind { .. })));
}

#[test]
fn too_large_rejected() {
    let g = FactorGraph::build(27, 0, &[], WeightSpec::ldpc_zero(27)).unwrap();
    assert!(matches!(brute_force_log_partition(&g), Err(Error::TooLarge { .. })));
}

#[test]
fn entropy_shift_vanishes_at_half() {
    assert_eq!(conditional_entropy_ldpc(0.3, 0.5), 0.3);
    assert_eq!(conditional_entropy_ldgm(0.3, 0.5, 2.0), 0.3);
}

#[test]
fn ldpc_entropy_at_half_from_rank() {
    let mut full_rank_seen = false;
    for seed in 0..10 {
        let g = sample_regular_bipartite(3, 6, 12, seed).unwrap();
        let (avg_f, _) = expected_free_energy(&g, 0.5, 1, 0).unwrap();
        let k = codeword_count_gf2(&g).unwrap();
        let h = conditional_entropy_ldpc(avg_f, 0.5);
        assert!((h - k as f64 * LN_2 / 12.0).abs() < 1e-12);
        if k == 6 {
            full_rank_seen = true;
            assert!((h - 0.5 * LN_2).abs() < 1e-12);
        }
    }
    assert!(full_rank_seen);
}

/// `H(X|Y)/n` for a uniformly chosen codeword sent over the BSC.
fn direct_ldpc_entropy(g: &FactorGraph, p: f64) -> f64 {
    let n = g.n();
    let codewords: Vec<u32> = (0u32..1 << n)
        .filter(|x| (0..g.m()).all(|a| g.check_edges(a).iter().filter(|&&e| x >> g.edge(e).0 & 1 == 1).count() % 2 == 0))
        .collect();
    let k = (codewords.len() as f64).log2();
    let mut h_y = 0.0;
    for y in 0u32..1 << n {
        let py: f64 = codewords
            .iter()
            .map(|&x| {
                let d = (x ^ y).count_ones() as i32;
                p.powi(d) * (1.0 - p).powi(n as i32 - d)
            })
            .sum::<f64>()
            / codewords.len() as f64;
        if py > 0.0 {
            h_y -= py * py.ln();
        }
    }
    (k * LN_2 + n as f64 * h2(p) - h_y) / n as f64
}

/// `H(U|Y)/n` for uniform information bits encoded by the generator checks.
fn direct_ldgm_entropy(g: &FactorGraph, p: f64) -> f64 {
    let (n, m) = (g.n(), g.m());
    let encode = |u: u32| -> u32 {
        (0..m).fold(0, |acc, a| {
            let bit = g.check_edges(a).iter().filter(|&&e| u >> g.edge(e).0 & 1 == 1).count() % 2;
            acc | (bit as u32) << a
        })
    };
    let xs: Vec<u32> = (0u32..1 << n).map(encode).collect();
    let mut h_y = 0.0;
    for y in 0u32..1 << m {
        let py: f64 = xs
            .iter()
            .map(|&x| {
                let d = (x ^ y).count_ones() as i32;
                p.powi(d) * (1.0 - p).powi(m as i32 - d)
            })
            .sum::<f64>()
            / xs.len() as f64;
        if py > 0.0 {
            h_y -= py * py.ln();
        }
    }
    (n as f64 * LN_2 + m as f64 * h2(p) - h_y) / n as f64
}

#[test]
fn ldpc_entropy_matches_direct_enumeration() {
    for &(p, seed) in &[(0.45, 1u64), (0.2, 2), (0.05, 3)] {
        let g = sample_regular_bipartite(3, 6, 8, seed).unwrap();
        let (avg_f, _) = expected_free_energy(&g, p, 1, 0).unwrap();
        let h = conditional_entropy_ldpc(avg_f, p);
        assert!((h - direct_ldpc_entropy(&g, p)).abs() < 1e-10, "p = {p}");
    }
}

#[test]
fn ldgm_entropy_degree_one_checks() {
    for n in 1..=4 {
        let g = sample_ldgm(&[(1, 1.0)], &[(1, 1.0)], n, 5).unwrap();
        for &p in &[0.1, 0.3, 0.45] {
            let (avg_f, _) = expected_free_energy(&g, p, 1, 0).unwrap();
            let h = conditional_entropy_ldgm(avg_f, p, g.m() as f64 / n as f64);
            assert!((h - direct_ldgm_entropy(&g, p)).abs() < 1e-10);
        }
    }
}

#[test]
fn ldgm_entropy_3_6_n6() {
    let g = sample_ldgm(&[(3, 1.0)], &[(6, 1.0)], 6, 2).unwrap();
    let (avg_f, _) = expected_free_energy(&g, 0.45, 1, 0).unwrap();
    let h = conditional_entropy_ldgm(avg_f, 0.45, g.m() as f64 / g.n() as f64);
    assert!((h - direct_ldgm_entropy(&g, 0.45)).abs() < 1e-10);
}

#[test]
fn low_noise_entropy_near_zero() {
    let g = sample_regular_bipartite(3, 6, 6, 4).unwrap();
    let (avg_f, _) = expected_free_energy(&g, 0.01, 1, 0).unwrap();
    let h = conditional_entropy_ldpc(avg_f, 0.01);
    assert!(h >= -1e-12 && h < 0.05, "H/n = {h}");
}

fn relabel(g: &FactorGraph, perm: &[usize]) -> FactorGraph {
    let edges: Vec<(usize, usize)> = g.edges().iter().map(|&(i, a)| (perm[i], a)).collect();
    let weights = match g.weights() {
        WeightSpec::Ldpc { fields } => {
            let mut f = vec![0.0; fields.len()];
            for (i, &h) in fields.iter().enumerate() {
                f[perm[i]] = h;
            }
            WeightSpec::Ldpc { fields: f }
        }
        WeightSpec::General { beta, couplings } => WeightSpec::General {
            beta: *beta,
            couplings: couplings
                .iter()
                .map(|list| {
                    list.iter()
                        .map(|c| Coupling {
                            vars: c.vars.iter().map(|&i| perm[i]).collect(),
                            j: c.j,
                        })
                        .collect()
                })
                .collect(),
        },
        other => other.clone(),
    };
    FactorGraph::build(g.n(), g.m(), &edges, weights).unwrap()
}

fn with_isolated_variable(g: &FactorGraph) -> FactorGraph {
    let weights = match g.weights() {
        WeightSpec::Ldpc { fields } => {
            let mut f = fields.clone();
            f.push(0.0);
            WeightSpec::Ldpc { fields: f }
        }
        other => other.clone(),
    };
    FactorGraph::build(g.n() + 1, g.m(), g.edges(), weights).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ldpc_zero_field_matches_rank(seed in any::<u64>(), shape in 0usize..3) {
        let (l, r, n) = [(3, 6, 12), (3, 4, 8), (2, 4, 10)][shape];
        let g = sample_regular_bipartite(l, r, n, seed).unwrap();
        let log_z = brute_force_log_partition(&g).unwrap().log_z;
        prop_assert!((log_z - codeword_count_gf2(&g).unwrap() as f64 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn isolated_variable_adds_ln2(seed in any::<u64>(), family in 0usize..2) {
        let g = if family == 0 {
            common::random_general(6, 4, 3, 0.4, seed)
        } else {
            common::ldpc_instance(3, 4, 8, 0.3, seed)
        };
        let a = brute_force_log_partition(&g).unwrap().log_z;
        let b = brute_force_log_partition(&with_isolated_variable(&g)).unwrap().log_z;
        prop_assert!((b - a - LN_2).abs() < 1e-12);
    }

    #[test]
    fn relabelling_invariance(seed in any::<u64>(), perm in Just((0..8).collect::<Vec<usize>>()).prop_shuffle()) {
        let g = common::ldpc_instance(3, 4, 8, 0.2, seed);
        let a = brute_force_log_partition(&g).unwrap().log_z;
        let b = brute_force_log_partition(&relabel(&g, &perm)).unwrap().log_z;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        let h = common::random_general(8, 5, 3, 0.7, seed);
        let a = brute_force_log_partition(&h).unwrap().log_z;
        let b = brute_force_log_partition(&relabel(&h, &perm)).unwrap().log_z;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}
