//! Binary symmetric channel realisations and exact averages over them.
//!
//! Under the all-zero transmission a flipped observation turns the
//! corresponding field negative. LDPC fields live on variables, LDGM fields
//! on checks.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{brute_force_log_partition, gf2_rank};
use crate::graph::{half_log_likelihood, FactorGraph, ModelKind, WeightSpec};

/// Largest observation length averaged exhaustively.
pub const EXHAUSTIVE_BITS: usize = 20;

/// Number of observed bits: `n` for LDPC, `m` for LDGM.
pub fn observation_len(graph: &FactorGraph) -> Result<usize> {
    match graph.kind() {
        ModelKind::Ldpc => Ok(graph.n()),
        ModelKind::Ldgm => Ok(graph.m()),
        ModelKind::General => Err(Error::WrongWeightKind {
            expected: "ldpc or ldgm",
            found: "general",
        }),
    }
}

/// Field vector for a given flip pattern.
pub fn fields_from_flips(flips: &[bool], h: f64) -> Vec<f64> {
    flips.iter().map(|&f| if f { -h } else { h }).collect()
}

/// The same graph with fields set from a flip pattern.
pub fn with_flips(graph: &FactorGraph, flips: &[bool], h: f64) -> Result<FactorGraph> {
    let fields = fields_from_flips(flips, h);
    match graph.kind() {
        ModelKind::Ldpc => graph.with_weights(WeightSpec::Ldpc { fields }),
        ModelKind::Ldgm => graph.with_weights(WeightSpec::Ldgm { fields }),
        ModelKind::General => Err(Error::WrongWeightKind {
            expected: "ldpc or ldgm",
            found: "general",
        }),
    }
}

/// Draws a flip pattern with i.i.d. flip probability `p`.
pub fn sample_flips<R: Rng>(len: usize, p: f64, rng: &mut R) -> Vec<bool> {
    (0..len).map(|_| rng.gen_bool(p)).collect()
}

/// The graph with channel-generated fields from a seeded flip pattern.
pub fn apply_channel(graph: &FactorGraph, p: f64, seed: u64) -> Result<FactorGraph> {
    if !(p > 0.0 && p <= 0.5) {
        return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1/2]")));
    }
    let len = observation_len(graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flips = sample_flips(len, p, &mut rng);
    with_flips(graph, &flips, half_log_likelihood(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AverageMethod {
    Exhaustive,
    MonteCarlo,
}

/// One channel realisation with its probability weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realization {
    pub weight: f64,
    pub flips: Vec<bool>,
    /// Exact `ln Z` when it came for free from the enumeration.
    pub log_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAverage {
    pub method: AverageMethod,
    pub p: f64,
    pub h: f64,
    pub realizations: Vec<Realization>,
}

fn bits_to_flips(y: u64, len: usize) -> Vec<bool> {
    (0..len).map(|k| y >> k & 1 == 1).collect()
}

/// Distinct realisations up to the gauge symmetry of the code, with exact
/// probabilities and exact `ln Z`. Observations `y` and `y + c` for a codeword
/// `c` give the same partition function and the same Bethe free energy.
fn coset_realizations(graph: &FactorGraph, p: f64) -> Result<Vec<Realization>> {
    let len = observation_len(graph)?;
    let h = half_log_likelihood(p);
    let rho = p / (1.0 - p);
    let mut columns = vec![0u64; len];
    let multiplicity_log;
    let reduce: Box<dyn Fn(u64) -> u64> = match graph.kind() {
        ModelKind::Ldpc => {
            if graph.m() > 64 {
                return Err(Error::InvalidParameter("more than 64 checks".into()));
            }
            for (i, col) in columns.iter_mut().enumerate() {
                for &e in graph.var_edges(i) {
                    *col |= 1 << graph.edge(e).1;
                }
            }
            multiplicity_log = 0.0;
            let cols = columns.clone();
            Box::new(move |y| {
                let mut s = 0u64;
                let mut rest = y;
                while rest != 0 {
                    let i = rest.trailing_zeros() as usize;
                    s ^= cols[i];
                    rest &= rest - 1;
                }
                s
            })
        }
        _ => {
            let gens: Vec<u64> = (0..graph.n())
                .map(|i| {
                    graph
                        .var_edges(i)
                        .iter()
                        .fold(0u64, |acc, &e| acc | 1 << graph.edge(e).1)
                })
                .collect();
            let mut basis: Vec<u64> = Vec::new();
            for mut v in gens.iter().copied() {
                for &b in &basis {
                    v = v.min(v ^ b);
                }
                if v != 0 {
                    for b in basis.iter_mut() {
                        let top = 63 - v.leading_zeros();
                        if *b >> top & 1 == 1 {
                            *b ^= v;
                        }
                    }
                    basis.push(v);
                    basis.sort_unstable_by(|a, b| b.cmp(a));
                }
            }
            let rank = basis.len();
            debug_assert_eq!(
                rank,
                gf2_rank(gens.iter().map(|&g| vec![g]).collect())
            );
            multiplicity_log = (graph.n() - rank) as f64 * std::f64::consts::LN_2;
            Box::new(move |mut y| {
                for &b in &basis {
                    y = y.min(y ^ b);
                }
                y
            })
        }
    };
    let mut cosets: HashMap<u64, (u64, f64)> = HashMap::new();
    for y in 0..(1u64 << len) {
        let w = rho.powi(y.count_ones() as i32);
        let entry = cosets.entry(reduce(y)).or_insert((y, 0.0));
        entry.1 += w;
    }
    let mut list: Vec<(u64, f64)> = cosets.into_values().collect();
    list.sort_unstable_by_key(|e| e.0);
    let base = (1.0 - p).powi(len as i32);
    Ok(list
        .into_iter()
        .map(|(rep, s)| Realization {
            weight: base * s,
            flips: bits_to_flips(rep, len),
            log_z: Some(h * len as f64 + multiplicity_log + s.ln()),
        })
        .collect())
}

/// Realisations for averaging over the channel: exact enumeration of gauge
/// classes when the observation has at most [`EXHAUSTIVE_BITS`] bits, seeded
/// Monte Carlo with `mc_samples` draws otherwise.
pub fn channel_average(
    graph: &FactorGraph,
    p: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<ChannelAverage> {
    if !(p > 0.0 && p <= 0.5) {
        return Err(Error::InvalidParameter(format!("p = {p} outside (0, 1/2]")));
    }
    let len = observation_len(graph)?;
    let h = half_log_likelihood(p);
    if len <= EXHAUSTIVE_BITS {
        return Ok(ChannelAverage {
            method: AverageMethod::Exhaustive,
            p,
            h,
            realizations: coset_realizations(graph, p)?,
        });
    }
    if mc_samples == 0 {
        return Err(Error::InvalidParameter("mc_samples must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let realizations = (0..mc_samples)
        .map(|_| Realization {
            weight: 1.0 / mc_samples as f64,
            flips: sample_flips(len, p, &mut rng),
            log_z: None,
        })
        .collect();
    Ok(ChannelAverage {
        method: AverageMethod::MonteCarlo,
        p,
        h,
        realizations,
    })
}

/// Weighted mean and standard error (zero for exact averages) of a per-realisation quantity.
pub fn weighted_mean(avg: &ChannelAverage, values: &[f64]) -> (f64, f64) {
    let mean: f64 = avg
        .realizations
        .iter()
        .zip(values)
        .map(|(r, v)| r.weight * v)
        .sum();
    let stderr = match avg.method {
        AverageMethod::Exhaustive => 0.0,
        AverageMethod::MonteCarlo => {
            let k = values.len() as f64;
            if k < 2.0 {
                f64::NAN
            } else {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            }
        }
    };
    (mean, stderr)
}

/// `E_h[(1/n) ln Z]` with its standard error.
pub fn expected_free_energy(
    graph: &FactorGraph,
    p: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let avg = channel_average(graph, p, mc_samples, seed)?;
    let n = graph.n() as f64;
    let values = avg
        .realizations
        .iter()
        .map(|r| match r.log_z {
            Some(v) => Ok(v / n),
            None => {
                let g = with_flips(graph, &r.flips, avg.h)?;
                Ok(brute_force_log_partition(&g)?.log_z / n)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(weighted_mean(&avg, &values))
}
