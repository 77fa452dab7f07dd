//! Vertex expansion of the variable side and the associated constants.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{h2, FactorGraph};

/// Default cap on the number of subsets inspected by the exhaustive check.
pub const DEFAULT_SUBSET_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExpanderVerdict {
    Certified { subsets_checked: u64 },
    Refuted { witness: Vec<usize>, boundary: usize },
}

impl ExpanderVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, ExpanderVerdict::Certified { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MonteCarloVerdict {
    NotRefuted,
    Refuted { witness: Vec<usize>, boundary: usize },
}

/// Largest subset size strictly below `lambda * n`.
pub fn max_subset_size(n: usize, lambda: f64) -> usize {
    let bound = lambda * n as f64;
    if bound <= 1.0 {
        return 0;
    }
    ((bound - 1e-12).ceil() as usize - 1).min(n)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn required(l: usize, kappa: f64, size: usize) -> f64 {
    kappa * l as f64 * size as f64
}

/// Checks `|dV'| >= kappa * l * |V'|` for every variable subset with `|V'| < lambda n`,
/// smallest subsets first. `l` is the largest variable degree.
pub fn check_expander_exhaustive(graph: &FactorGraph, lambda: f64, kappa: f64) -> Result<ExpanderVerdict> {
    check_expander_exhaustive_with_budget(graph, lambda, kappa, DEFAULT_SUBSET_BUDGET)
}

pub fn check_expander_exhaustive_with_budget(
    graph: &FactorGraph,
    lambda: f64,
    kappa: f64,
    budget: u64,
) -> Result<ExpanderVerdict> {
    let n = graph.n();
    let kmax = max_subset_size(n, lambda);
    let total: f64 = (1..=kmax).map(|k| binomial(n, k)).sum();
    if total > budget as f64 {
        return Err(Error::BudgetExceeded {
            what: format!("{total:.0} subsets for the exhaustive expander check"),
            limit: budget,
        });
    }
    let l = graph.l_max();
    let mut counts = vec![0u32; graph.m()];
    let mut chosen = Vec::new();
    let mut checked = 0u64;
    for size in 1..=kmax {
        let need = required(l, kappa, size);
        if let Some(witness) = search(graph, size, need, 0, 0, &mut counts, &mut chosen, &mut checked) {
            return Ok(witness);
        }
    }
    Ok(ExpanderVerdict::Certified {
        subsets_checked: checked,
    })
}

#[allow(clippy::too_many_arguments)]
fn search(
    graph: &FactorGraph,
    size: usize,
    need: f64,
    start: usize,
    boundary: usize,
    counts: &mut [u32],
    chosen: &mut Vec<usize>,
    checked: &mut u64,
) -> Option<ExpanderVerdict> {
    if chosen.len() == size {
        *checked += 1;
        if (boundary as f64) < need {
            return Some(ExpanderVerdict::Refuted {
                witness: chosen.clone(),
                boundary,
            });
        }
        return None;
    }
    let remaining = size - chosen.len();
    for i in start..=graph.n() - remaining {
        let mut added = 0;
        for &e in graph.var_edges(i) {
            let a = graph.edge(e).1;
            if counts[a] == 0 {
                added += 1;
            }
            counts[a] += 1;
        }
        chosen.push(i);
        let found = search(graph, size, need, i + 1, boundary + added, counts, chosen, checked);
        chosen.pop();
        for &e in graph.var_edges(i) {
            counts[graph.edge(e).1] -= 1;
        }
        if found.is_some() {
            return found;
        }
    }
    None
}

/// Samples random subsets below `lambda n`; can only refute.
pub fn check_expander_montecarlo(
    graph: &FactorGraph,
    lambda: f64,
    kappa: f64,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloVerdict> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let n = graph.n();
    let kmax = max_subset_size(n, lambda);
    if kmax == 0 {
        return Ok(MonteCarloVerdict::NotRefuted);
    }
    let l = graph.l_max();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mark = vec![false; graph.m()];
    for _ in 0..trials {
        let size = rng.gen_range(1..=kmax);
        let mut subset = sample(&mut rng, n, size).into_vec();
        subset.sort_unstable();
        mark.iter_mut().for_each(|x| *x = false);
        let mut boundary = 0;
        for &i in &subset {
            for &e in graph.var_edges(i) {
                let a = graph.edge(e).1;
                if !mark[a] {
                    mark[a] = true;
                    boundary += 1;
                }
            }
        }
        if (boundary as f64) < required(l, kappa, size) {
            return Ok(MonteCarloVerdict::Refuted {
                witness: subset,
                boundary,
            });
        }
    }
    Ok(MonteCarloVerdict::NotRefuted)
}

/// Left-hand side of the defining equation of `lambda_0`.
pub fn lambda0_equation(l: usize, r: usize, kappa: f64, lambda: f64) -> f64 {
    let (lf, rf) = (l as f64, r as f64);
    let kr = kappa * rf;
    (lf - 1.0) / lf * h2(lambda) - h2(lambda * kr) / rf - lambda * kr * h2(1.0 / kr)
}

/// Positive root of the `lambda_0` equation on `(0, 1/(kappa r))` by bisection.
pub fn solve_lambda0(l: usize, r: usize, kappa: f64) -> Result<f64> {
    if l < 2 || r < 1 || !(kappa > 0.0 && kappa < 1.0 - 1.0 / l as f64) {
        return Err(Error::InadmissibleKappa { l, r, kappa });
    }
    let hi_end = 1.0 / (kappa * r as f64);
    let g = |x: f64| lambda0_equation(l, r, kappa, x);
    let grid = 20_000;
    let (lo_exp, hi_exp) = (-300.0f64, 0.0f64);
    let mut prev_x = hi_end * 10f64.powf(lo_exp);
    let mut prev_g = g(prev_x);
    let mut bracket = None;
    for k in 1..=grid {
        let frac = lo_exp + (hi_exp - lo_exp) * k as f64 / grid as f64;
        let x = (hi_end * 10f64.powf(frac)).min(hi_end * (1.0 - 1e-12));
        let gx = g(x);
        if prev_g > 0.0 && gx <= 0.0 {
            bracket = Some((prev_x, x));
            break;
        }
        prev_x = x;
        prev_g = gx;
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| {
        Error::NoSignChange(format!("(l, r, kappa) = ({l}, {r}, {kappa})"))
    })?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Admissible open interval for `kappa`.
pub fn kappa_interval(l: usize, r: usize) -> (f64, f64) {
    let (lf, rf) = (l as f64, r as f64);
    (1.0 - 2.0 * (rf - 1.0) / (lf * rf), 1.0 - 1.0 / lf)
}

/// Distance from the ends of the admissible interval treated as the end itself.
const KAPPA_EDGE: f64 = 1e-12;

/// `c = r - (2 + r) / (3 - l (1 - kappa))`.

pub fn expander_exponent_c(l: usize, r: usize, kappa: f64) -> Result<f64> {
    let (lo, hi) = kappa_interval(l, r);
    let denom = 3.0 - l as f64 * (1.0 - kappa);
    if !(kappa > lo + KAPPA_EDGE && kappa < hi - KAPPA_EDGE) || denom <= 0.0 {
        return Err(Error::InadmissibleKappa { l, r, kappa });
    }
    let c = r as f64 - (2.0 + r as f64) / denom;
    if c <= 0.0 {
        return Err(Error::InadmissibleKappa { l, r, kappa });
    }
    Ok(c)
}

/// Expansion parameters with their derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpanderParams {
    pub lambda: f64,
    pub kappa: f64,
    pub lambda0: f64,
    pub c: f64,
}

impl ExpanderParams {
    pub fn new(l: usize, r: usize, lambda: f64, kappa: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} outside (0, 1)")));
        }
        let c = expander_exponent_c(l, r, kappa)?;
        let lambda0 = solve_lambda0(l, r, kappa)?;
        Ok(ExpanderParams {
            lambda,
            kappa,
            lambda0,
            c,
        })
    }
}
