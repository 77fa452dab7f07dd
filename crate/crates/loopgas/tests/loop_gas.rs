mod common;

use loopgas::activity::{
    activity, contract_loop_sum, loop_sum, split_small_large, verify_full_expansion, verify_loop_identity,
    ActivityTable,
};
use loopgas::bounds::{
    activity_bound, default_bound_candidates, first_applicable_bound, ldgm_trivial_activity, BoundKind,
    BoundParams,
};
use loopgas::bp::{solve_fixed_point, BpParams, MessageSet};
use loopgas::loops::{
    dangling_free_subsets_raw, enumerate_generalized_loops, enumerate_polymers, polymers_raw, LoopSubgraph,
};
use loopgas::{ChannelParams, FactorGraph, WeightSpec};
use proptest::prelude::*;

fn fixed_point(g: &FactorGraph) -> MessageSet {
    let out = solve_fixed_point(g, None, BpParams::default()).unwrap();
    assert!(out.converged, "BP residual {}", out.residual);
    out.messages
}

/// Small instance of one of the three families, indexed by `family`.
fn instance(family: usize, seed: u64) -> FactorGraph {
    match family % 3 {
        0 => common::random_general(6, 4, 3, 0.3, seed),
        1 => common::ldgm_instance(&[(2, 1.0)], &[(3, 1.0)], 6, 0.45, seed),
        _ => common::ldpc_instance(3, 4, 8, 0.45, seed),
    }
}

/// Sizes of the connected components of an edge subset.
fn component_sizes(g: &FactorGraph, edges: &[usize]) -> Vec<usize> {
    let total = g.num_nodes();
    let mut parent: Vec<usize> = (0..total).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let mut touched = std::collections::BTreeSet::new();
    for &e in edges {
        let (u, v) = g.endpoints(e);
        touched.insert(u);
        touched.insert(v);
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        parent[ru] = rv;
    }
    let mut sizes = std::collections::BTreeMap::new();
    for x in touched {
        *sizes.entry(find(&mut parent, x)).or_insert(0) += 1;
    }
    sizes.into_values().collect()
}

#[test]
fn enumeration_matches_raw_scan() {
    for seed in 0..6 {
        for g in [
            common::random_general(6, 4, 3, 0.3, seed),
            common::ldgm_instance(&[(2, 1.0)], &[(3, 1.0)], 6, 0.3, seed),
            common::random_general(5, 4, 4, 0.3, seed),
        ] {
            assert!(g.num_edges() <= 16);
            let loops: Vec<Vec<usize>> = enumerate_generalized_loops(&g, 1 << 20)
                .unwrap()
                .into_iter()
                .map(|l| l.edges)
                .collect();
            let mut sorted = loops.clone();
            sorted.sort();
            assert_eq!(sorted, dangling_free_subsets_raw(&g).unwrap());

            let raw_polymers = polymers_raw(&g).unwrap();
            let polymers: Vec<Vec<usize>> = enumerate_polymers(&g, g.num_nodes())
                .unwrap()
                .into_iter()
                .map(|p| p.subgraph.edges)
                .collect();
            assert_eq!(polymers, raw_polymers);

            for cutoff in [4, 6, 8] {
                let grown: Vec<Vec<usize>> = enumerate_polymers(&g, cutoff)
                    .unwrap()
                    .into_iter()
                    .map(|p| p.subgraph.edges)
                    .collect();
                let expected: Vec<Vec<usize>> = raw_polymers
                    .iter()
                    .filter(|e| LoopSubgraph::from_edges(&g, e).size() <= cutoff)
                    .cloned()
                    .collect();
                assert_eq!(grown, expected, "seed {seed} cutoff {cutoff}");
            }
        }
    }
}

#[test]
fn two_disjoint_cycles() {
    let g = common::pairwise_cycles(4, &[((0, 1), [0.5, -0.3]), ((2, 3), [0.2, 0.7])], 1.0);
    assert_eq!(enumerate_generalized_loops(&g, 100).unwrap().len(), 3);
    assert_eq!(enumerate_polymers(&g, 10).unwrap().len(), 2);
}

#[test]
fn trees_have_no_loops() {
    for seed in 0..10 {
        let t = common::random_tree(12, "general", seed);
        assert!(enumerate_generalized_loops(&t, 100).unwrap().is_empty());
        let report = loop_sum(&t, &fixed_point(&t), 100).unwrap();
        assert_eq!(report.loop_count, 0);
        assert_eq!(report.value, 1.0);
    }
}

#[test]
fn dangling_factors_vanish_at_fixed_points() {
    for family in 0..3 {
        let g = instance(family, 11);
        let m = fixed_point(&g);
        let table = ActivityTable::new(&g, &m).unwrap();
        for x in 0..g.num_nodes() {
            for k in 0..g.node_edges(x).len() {
                assert!(table.factor(x, 1 << k).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn ldgm_trivial_activities_closed_form() {
    let g = common::ldgm_instance(&[(2, 1.0)], &[(3, 1.0)], 6, 0.3, 5);
    let zeros = MessageSet::zeros(&g);
    for l in enumerate_generalized_loops(&g, 1 << 16).unwrap() {
        let k = activity(&g, &zeros, &l).unwrap().value;
        assert!((k - ldgm_trivial_activity(&g, &l)).abs() < 1e-14);
    }
}

#[test]
fn ldpc_zero_field_cycle_sum() {
    let g = FactorGraph::build(2, 2, &[(0, 0), (1, 0), (0, 1), (1, 1)], WeightSpec::ldpc_zero(2)).unwrap();
    let report = loop_sum(&g, &MessageSet::zeros(&g), 100).unwrap();
    assert_eq!(report.value, 2.0);
    assert_eq!(report.loop_count, 1);
}

#[test]
fn identity_on_twenty_instances() {
    for seed in 0..20u64 {
        let g = instance(seed as usize, seed);
        let r = verify_loop_identity(&g, &fixed_point(&g)).unwrap();
        assert!(r.residual <= 1e-8, "seed {seed}: {}", r.residual);
        assert!(r.max_dangling_activity <= 1e-9);
    }
}

#[test]
fn full_expansion_at_random_messages() {
    for seed in 0..10u64 {
        let g = if seed % 2 == 0 {
            common::random_general(5, 4, 3, 0.4, seed)
        } else {
            common::ldgm_instance(&[(2, 1.0)], &[(3, 1.0)], 6, 0.3, seed)
        };
        assert!(g.num_edges() <= 14);
        let r = verify_full_expansion(&g, &common::random_messages(&g, 0.6, seed)).unwrap();
        assert!(r.residual <= 1e-9, "seed {seed}: {}", r.residual);
        assert!(r.max_dangling_activity > 1e-6);
    }
}

#[test]
fn high_temperature_bound_holds() {
    let g = common::random_general(6, 4, 3, 0.003, 2);
    let m = fixed_point(&g);
    for l in enumerate_generalized_loops(&g, 1 << 16).unwrap() {
        let k = activity(&g, &m, &l).unwrap().value;
        let b = activity_bound(&g, &m, &BoundParams::HighTemperature, &l).unwrap();
        assert!(k.abs() <= b * (1.0 + 1e-12));
    }
}

#[test]
fn ldgm_trivial_bound_holds() {
    let g = common::ldgm_instance(&[(3, 1.0)], &[(3, 1.0)], 6, 0.3, 3);
    let m = MessageSet::zeros(&g);
    for l in enumerate_generalized_loops(&g, 1 << 16).unwrap() {
        let k = activity(&g, &m, &l).unwrap().value;
        let b = activity_bound(&g, &m, &BoundParams::LdgmTrivial, &l).unwrap();
        assert!(k.abs() <= b * (1.0 + 1e-12));
    }
}

#[test]
fn ldpc_high_noise_bound_holds() {
    let chan = ChannelParams::from_p(0.47, 0.1).unwrap();
    let g = common::ldpc_instance(3, 4, 8, 0.47, 1);
    let m = fixed_point(&g);
    let params = BoundParams::LdpcHighNoise { theta: chan.theta };
    for l in enumerate_generalized_loops(&g, 1 << 18).unwrap() {
        let k = activity(&g, &m, &l).unwrap().value;
        let b = activity_bound(&g, &m, &params, &l).unwrap();
        assert!(k.abs() <= b * (1.0 + 1e-12));
    }
    let too_noisy = BoundParams::LdpcHighNoise { theta: 0.5 };
    let any = &enumerate_generalized_loops(&g, 1 << 18).unwrap()[0];
    assert!(activity_bound(&g, &m, &too_noisy, any).is_err());
}

#[test]
fn split_at_six_nodes() {
    let g = common::ldpc_instance(3, 4, 8, 0.45, 3);
    let m = fixed_point(&g);
    let lambda = 6.0 / g.n() as f64;
    let split = split_small_large(&g, &m, lambda, 1 << 22).unwrap();
    let table = ActivityTable::new(&g, &m).unwrap();
    let mut small = 1.0;
    for l in enumerate_generalized_loops(&g, 1 << 22).unwrap() {
        if component_sizes(&g, &l.edges).iter().all(|&s| (s as f64) < 6.0) {
            small += table.subgraph_activity(&g, &l);
        }
    }
    assert!((split.z_small - small).abs() <= 1e-12);
    assert!((split.z_small + split.r_large - split.loop_sum).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn contraction_equals_enumeration(seed in any::<u64>(), family in 0usize..3, amplitude in 0.0f64..0.8) {
        let g = instance(family, seed);
        let m = common::random_messages(&g, amplitude, seed);
        let table = ActivityTable::new(&g, &m).unwrap();
        let loops = enumerate_generalized_loops(&g, 1 << 20).unwrap();
        let direct: f64 = 1.0 + loops.iter().map(|l| table.subgraph_activity(&g, l)).sum::<f64>();
        let report = contract_loop_sum(&g, &table, 1 << 20).unwrap();
        prop_assert_eq!(report.loop_count, loops.len() as u64);
        prop_assert!((report.value - direct).abs() <= 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn identity_report_invariants(seed in any::<u64>(), family in 0usize..2) {
        let g = instance(family, seed);
        let out = solve_fixed_point(&g, None, BpParams::default()).unwrap();
        prop_assume!(out.converged);
        let r = verify_loop_identity(&g, &out.messages).unwrap();
        prop_assert!(r.residual <= 1e-8);
        if let Some(err) = r.factorization_error {
            prop_assert!(err <= 1e-12);
        }
        prop_assert!(r.max_dangling_activity <= 1e3 * out.residual + 1e-14);
    }

    #[test]
    fn loop_edge_inequality(seed in any::<u64>(), family in 0usize..3) {
        let g = instance(family, seed);
        for l in enumerate_generalized_loops(&g, 1 << 20).unwrap() {
            prop_assert!(g.r_max() * l.check_degrees.len() >= 2 * l.var_degrees.len());
            prop_assert!(l.is_generalized_loop());
        }
    }

    #[test]
    fn applicable_bounds_are_sound(seed in any::<u64>(), family in 0usize..3, p in 0.44f64..0.49) {
        let g = match family {
            0 => common::random_general(6, 4, 3, 0.003, seed),
            1 => common::ldgm_instance(&[(3, 1.0)], &[(3, 1.0)], 6, p, seed),
            _ => common::ldpc_instance(3, 4, 8, p, seed),
        };
        let out = solve_fixed_point(&g, None, BpParams::default()).unwrap();
        prop_assume!(out.converged);
        let theta = ChannelParams::from_p(p, 0.1).unwrap().theta;
        let candidates = default_bound_candidates(&g, theta);
        for l in enumerate_generalized_loops(&g, 1 << 20).unwrap() {
            let k = activity(&g, &out.messages, &l).unwrap().value;
            if let Some((kind, b)) = first_applicable_bound(&g, &out.messages, &candidates, &l) {
                prop_assert!(k.abs() <= b * (1.0 + 1e-12), "{:?}: {} > {}", kind, k, b);
                prop_assert!(kind != BoundKind::Expander);
            }
        }
    }
}
