//! Exact partition functions by enumeration, GF(2) rank, and entropy formulas.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FactorGraph, ModelKind};

/// Largest `n` accepted by [`brute_force_log_partition`].
pub const BRUTE_FORCE_CAP: usize = 26;

const BLOCK_BITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub log_z: f64,
    pub n: usize,
    pub max_log_weight: f64,
}

impl PartitionReport {
    pub fn free_energy(&self) -> f64 {
        self.log_z / self.n as f64
    }
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    max: f64,
    sum: f64,
}

impl LogSum {
    pub(crate) fn new() -> Self {
        LogSum {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub(crate) fn push(&mut self, w: f64) {
        if w == f64::NEG_INFINITY {
            return;
        }
        if w > self.max {
            self.sum = self.sum * (self.max - w).exp() + 1.0;
            self.max = w;
        } else {
            self.sum += (w - self.max).exp();
        }
    }

    pub(crate) fn merge(self, other: LogSum) -> LogSum {
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        if self.max == f64::NEG_INFINITY {
            return other;
        }
        let max = self.max.max(other.max);
        LogSum {
            max,
            sum: self.sum * (self.max - max).exp() + other.sum * (other.max - max).exp(),
        }
    }

    pub(crate) fn value(&self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Incremental evaluator of the log-weight of a full configuration.
struct ConfigState<'g> {
    graph: &'g FactorGraph,
    masks: Vec<u32>,
    check_lw: Vec<f64>,
    odd_checks: usize,
}

impl<'g> ConfigState<'g> {
    fn new(graph: &'g FactorGraph, x: u64) -> Self {
        let mut masks = vec![0u32; graph.m()];
        for (a, mask) in masks.iter_mut().enumerate() {
            for (k, &e) in graph.check_edges(a).iter().enumerate() {
                let i = graph.edge(e).0;
                if x >> i & 1 == 1 {
                    *mask |= 1 << k;
                }
            }
        }
        let check_lw: Vec<f64> = (0..graph.m())
            .map(|a| graph.check_log_weight(a, masks[a]))
            .collect();
        let odd_checks = masks.iter().filter(|m| m.count_ones() % 2 == 1).count();
        ConfigState {
            graph,
            masks,
            check_lw,
            odd_checks,
        }
    }

    fn flip(&mut self, i: usize) {
        let parity = self.graph.kind() == ModelKind::Ldpc;
        for &e in self.graph.var_edges(i) {
            let a = self.graph.edge(e).1;
            let was_odd = self.masks[a].count_ones() % 2 == 1;
            self.masks[a] ^= 1 << self.graph.pos_in_check(e);
            if parity {
                if was_odd {
                    self.odd_checks -= 1;
                } else {
                    self.odd_checks += 1;
                }
            } else {
                self.check_lw[a] = self.graph.check_log_weight(a, self.masks[a]);
            }
        }
    }

    fn log_weight(&self, x: u64) -> f64 {
        if self.graph.kind() == ModelKind::Ldpc {
            if self.odd_checks > 0 {
                return f64::NEG_INFINITY;
            }
            let mut acc = 0.0;
            for i in 0..self.graph.n() {
                let h = self.graph.var_field(i);
                acc += if x >> i & 1 == 1 { -h } else { h };
            }
            acc
        } else {
            self.check_lw.iter().sum()
        }
    }
}

fn gray(k: u64) -> u64 {
    k ^ (k >> 1)
}

/// Exact `ln Z` over all `2^n` spin configurations.
pub fn brute_force_log_partition(graph: &FactorGraph) -> Result<PartitionReport> {
    let n = graph.n();
    if n > BRUTE_FORCE_CAP {
        return Err(Error::TooLarge {
            n,
            cap: BRUTE_FORCE_CAP,
        });
    }
    let block_bits = BLOCK_BITS.min(n);
    let blocks = 1u64 << (n - block_bits);
    let per_block = 1u64 << block_bits;
    let partials: Vec<(LogSum, f64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * per_block;
            let mut state = ConfigState::new(graph, gray(start));
            let mut acc = LogSum::new();
            let mut best = f64::NEG_INFINITY;
            for k in start..start + per_block {
                if k != start {
                    state.flip(k.trailing_zeros() as usize);
                }
                let w = state.log_weight(gray(k));
                best = best.max(w);
                acc.push(w);
            }
            (acc, best)
        })
        .collect();
    let (total, best) = partials
        .into_iter()
        .fold((LogSum::new(), f64::NEG_INFINITY), |(s, b), (p, pb)| {
            (s.merge(p), b.max(pb))
        });
    assert!(total.sum > 0.0, "partition function vanished");
    Ok(PartitionReport {
        log_z: total.value(),
        n,
        max_log_weight: best,
    })
}

/// Rank over GF(2) of a list of bit-vector rows.
pub fn gf2_rank(mut rows: Vec<Vec<u64>>) -> usize {
    let words = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..words * 64 {
        let (w, bit) = (col / 64, 1u64 << (col % 64));
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][w] & bit != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[w] & bit != 0 {
                row.iter_mut().zip(&pivot).for_each(|(x, y)| *x ^= y);
            }
        }
        rank += 1;
    }
    rank
}

/// Parity-check rows (one per check) as bit vectors over the variables.
pub fn parity_rows(graph: &FactorGraph) -> Vec<Vec<u64>> {
    let words = graph.n().div_ceil(64).max(1);
    (0..graph.m())
        .map(|a| {
            let mut row = vec![0u64; words];
            for &e in graph.check_edges(a) {
                let i = graph.edge(e).0;
                row[i / 64] |= 1 << (i % 64);
            }
            row
        })
        .collect()
}

/// `k` such that the code defined by the parity checks has `2^k` codewords.
pub fn codeword_count_gf2(graph: &FactorGraph) -> Result<usize> {
    if graph.kind() != ModelKind::Ldpc {
        return Err(Error::WrongWeightKind {
            expected: "ldpc",
            found: graph.kind().name(),
        });
    }
    Ok(graph.n() - gf2_rank(parity_rows(graph)))
}

fn channel_shift(p: f64) -> f64 {
    if p == 0.5 {
        0.0
    } else {
        (1.0 - 2.0 * p) / 2.0 * ((1.0 - p) / p).ln()
    }
}

/// Per-bit conditional entropy of an LDPC code from the averaged free energy.
pub fn conditional_entropy_ldpc(avg_f: f64, p: f64) -> f64 {
    avg_f - channel_shift(p)
}

/// Per-information-bit conditional entropy of an LDGM code; `l_over_r = m / n`.
pub fn conditional_entropy_ldgm(avg_f: f64, p: f64, l_over_r: f64) -> f64 {
    avg_f - l_over_r * channel_shift(p)
}
