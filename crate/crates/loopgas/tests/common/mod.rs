//! Instance generators shared by the integration tests.
#![allow(dead_code)]

use loopgas::channel::apply_channel;
use loopgas::ensemble::{sample_ldgm, sample_regular_bipartite};
use loopgas::graph::Coupling;
use loopgas::{FactorGraph, WeightSpec};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random couplings on a fixed topology: every pair inside a check and the full product.
pub fn general_weights(graph_edges: &[(usize, usize)], m: usize, beta: f64, rng: &mut ChaCha8Rng) -> WeightSpec {
    let mut per_check: Vec<Vec<usize>> = vec![Vec::new(); m];
    for &(i, a) in graph_edges {
        per_check[a].push(i);
    }
    let couplings = per_check
        .iter()
        .map(|vars| {
            let mut list = Vec::new();
            for x in 0..vars.len() {
                for y in x + 1..vars.len() {
                    list.push(Coupling {
                        vars: vec![vars[x], vars[y]],
                        j: rng.gen_range(-1.0..1.0),
                    });
                }
            }
            if vars.len() > 2 {
                list.push(Coupling {
                    vars: vars.clone(),
                    j: rng.gen_range(-1.0..1.0),
                });
            }
            if vars.len() == 1 {
                list.push(Coupling {
                    vars: vars.clone(),
                    j: rng.gen_range(-1.0..1.0),
                });
            }
            list
        })
        .collect();
    WeightSpec::General { beta, couplings }
}

/// Random Tanner graph where each check picks `r` distinct variables.
pub fn random_general(n: usize, m: usize, r: usize, beta: f64, seed: u64) -> FactorGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for a in 0..m {
        for i in sample(&mut rng, n, r).into_vec() {
            edges.push((i, a));
        }
    }
    let weights = general_weights(&edges, m, beta, &mut rng);
    FactorGraph::build(n, m, &edges, weights).unwrap()
}

/// Random bipartite tree with `nodes` nodes, variables and checks alternating by depth.
pub fn random_tree_edges(nodes: usize, seed: u64) -> (usize, usize, Vec<(usize, usize)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (is_var, index) per node; node 0 is a variable.
    let mut kinds = vec![(true, 0usize)];
    let (mut n, mut m) = (1usize, 0usize);
    let mut edges = Vec::new();
    for _ in 1..nodes {
        let parent = rng.gen_range(0..kinds.len());
        let (pv, pidx) = kinds[parent];
        if pv {
            edges.push((pidx, m));
            kinds.push((false, m));
            m += 1;
        } else {
            edges.push((n, pidx));
            kinds.push((true, n));
            n += 1;
        }
    }
    (n, m, edges)
}

pub fn random_tree(nodes: usize, kind: &str, seed: u64) -> FactorGraph {
    let (n, m, edges) = random_tree_edges(nodes, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let weights = match kind {
        "ldpc" => WeightSpec::Ldpc {
            fields: (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect(),
        },
        "ldgm" => WeightSpec::Ldgm {
            fields: (0..m).map(|_| rng.gen_range(-0.8..0.8)).collect(),
        },
        _ => general_weights(&edges, m, 0.5, &mut rng),
    };
    FactorGraph::build(n, m, &edges, weights).unwrap()
}

pub fn ldpc_instance(l: usize, r: usize, n: usize, p: f64, seed: u64) -> FactorGraph {
    let g = sample_regular_bipartite(l, r, n, seed).unwrap();
    apply_channel(&g, p, seed.wrapping_add(1000)).unwrap()
}

pub fn ldgm_instance(lambda: &[(usize, f64)], p_dist: &[(usize, f64)], n: usize, p: f64, seed: u64) -> FactorGraph {
    let g = sample_ldgm(lambda, p_dist, n, seed).unwrap();
    apply_channel(&g, p, seed.wrapping_add(1000)).unwrap()
}

/// Two variables joined by two pairwise checks: a single 4-cycle.
pub fn pairwise_cycle(beta: f64, j: [f64; 2]) -> FactorGraph {
    let edges = [(0, 0), (1, 0), (0, 1), (1, 1)];
    let couplings = j
        .iter()
        .map(|&j| vec![Coupling { vars: vec![0, 1], j }])
        .collect();
    FactorGraph::build(2, 2, &edges, WeightSpec::General { beta, couplings }).unwrap()
}

/// Pairwise 4-cycles at zero field: `cycles[k]` gives the variable pair and the two couplings.
pub fn pairwise_cycles(n: usize, cycles: &[((usize, usize), [f64; 2])], beta: f64) -> FactorGraph {
    let mut edges = Vec::new();
    let mut couplings = Vec::new();
    for (k, &((u, v), j)) in cycles.iter().enumerate() {
        for (c, &jc) in j.iter().enumerate() {
            let a = 2 * k + c;
            edges.push((u, a));
            edges.push((v, a));
            couplings.push(vec![Coupling { vars: vec![u, v], j: jc }]);
        }
    }
    FactorGraph::build(n, 2 * cycles.len(), &edges, WeightSpec::General { beta, couplings }).unwrap()
}

pub fn random_messages(graph: &FactorGraph, amplitude: f64, seed: u64) -> loopgas::bp::MessageSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut msgs = loopgas::bp::MessageSet::zeros(graph);
    for t in msgs.var_to_check.iter_mut().chain(msgs.check_to_var.iter_mut()) {
        *t = rng.gen_range(-amplitude..amplitude);
    }
    msgs
}
