//! Exponential growth rates of the expected number of subgraphs of a given
//! type times their activity bound, and their maximisation.
//!
//! Coordinates: `x_s = n_s / n` for `s = 2..=l`, `y_t = (r / l) m_t / n` for `t = 2..=r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{ALPHA1, ALPHA2};
use crate::error::{Error, Result};
use crate::graph::h2;

/// `omega = 4 r^2 - 2 r + 2`.
pub fn omega_constant(r: u64) -> u64 {
    4 * r * r - 2 * r + 2
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1u128, |acc, j| acc * (n - j) as u128 / (j + 1) as u128) as f64
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    (0..k).map(|j| ((n - j) as f64 / (j + 1) as f64).ln()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunctionSpec {
    pub l: usize,
    pub r: usize,
    pub theta: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub lambda: f64,
}

impl RateFunctionSpec {
    pub fn new(l: usize, r: usize, theta: f64, lambda: f64) -> Self {
        RateFunctionSpec {
            l,
            r,
            theta,
            alpha1: ALPHA1,
            alpha2: ALPHA2,
            lambda,
        }
    }
}

/// A point of the domain: `x[s - 2]` for `s = 2..=l`, `y[t - 2]` for `t = 2..=r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Growth rate of the expected number of subgraphs of a given type.
pub fn f_entropy(l: usize, r: usize, p: &TypePoint) -> f64 {
    let (lf, rf) = (l as f64, r as f64);
    let e: f64 = p.x.iter().enumerate().map(|(k, x)| (k + 2) as f64 / lf * x).sum();
    let sx: f64 = p.x.iter().sum();
    let sy: f64 = p.y.iter().sum();
    xlnx(1.0 - e) + xlnx(e)
        + p.x.iter().enumerate().map(|(k, x)| x * ln_binomial(l, k + 2)).sum::<f64>() / lf
        + p.y.iter().enumerate().map(|(k, y)| y * ln_binomial(r, k + 2)).sum::<f64>() / rf
        - (xlnx(1.0 - sy) + p.y.iter().map(|&y| xlnx(y)).sum::<f64>()) / rf
        - (xlnx(1.0 - sx) + p.x.iter().map(|&x| xlnx(x)).sum::<f64>()) / lf
}

/// Growth rate of the activity bound.
pub fn k_theta(spec: &RateFunctionSpec, p: &TypePoint) -> f64 {
    let (l, r, th) = (spec.l, spec.r, spec.theta);
    let (lf, rf) = (l as f64, r as f64);
    let mut total = 0.0;
    for (k, &y) in p.y.iter().enumerate() {
        let t = k + 2;
        let factor = if t == r {
            (1.0 + spec.alpha1 * th.powi(r as i32)).ln()
        } else {
            (spec.alpha1 * th.powi((r - t) as i32)).ln()
        };
        total += y / rf * factor;
    }
    for (k, &x) in p.x.iter().enumerate() {
        let s = k + 2;
        let sf = s as f64;
        let factor = if s % 2 == 0 {
            (1.0 + spec.alpha2 / 2.0 * (1.0 + 4.0 * sf + sf * sf) * th * th).ln()
        } else {
            (spec.alpha2 * (1.0 + sf) * th).ln()
        };
        total += x / lf * factor;
    }
    total
}

/// Slack of every domain constraint; the point is admissible when all are `>= 0`
/// (strict inequalities are treated with a caller-chosen margin).
fn constraint_slacks(spec: &RateFunctionSpec, p: &TypePoint) -> Vec<f64> {
    let (lf, rf) = (spec.l as f64, spec.r as f64);
    let mut out: Vec<f64> = p.x.iter().chain(&p.y).copied().collect();
    out.push(1.0 - p.x.iter().sum::<f64>());
    out.push(1.0 - p.y.iter().sum::<f64>());
    out.push(p.x.iter().sum::<f64>() / lf + p.y.iter().sum::<f64>() / rf - spec.lambda);
    out
}

/// Point from free coordinates `(x_2..x_l, y_2..y_{r-1})`, solving the edge
/// balance for `y_r`.
fn complete_point(spec: &RateFunctionSpec, free: &[f64]) -> TypePoint {
    let (l, r) = (spec.l, spec.r);
    let x = free[..l - 1].to_vec();
    let mut y = free[l - 1..].to_vec();
    let e: f64 = x.iter().enumerate().map(|(k, v)| (k + 2) as f64 / l as f64 * v).sum();
    let used: f64 = y.iter().enumerate().map(|(k, v)| (k + 2) as f64 / r as f64 * v).sum();
    y.push(e - used);
    TypePoint { x, y }
}

fn objective(spec: &RateFunctionSpec, free: &[f64]) -> f64 {
    let p = complete_point(spec, free);
    f_entropy(spec.l, spec.r, &p) + k_theta(spec, &p)
}

fn feasible(spec: &RateFunctionSpec, free: &[f64], margin: f64) -> bool {
    constraint_slacks(spec, &complete_point(spec, free))
        .iter()
        .all(|&s| s >= margin)
}

/// Feasible interval of coordinate `j` with the others fixed; every slack is affine in it.
fn coordinate_interval(spec: &RateFunctionSpec, free: &[f64], j: usize, margin: f64) -> Option<(f64, f64)> {
    let mut probe = free.to_vec();
    probe[j] = 0.0;
    let at0 = constraint_slacks(spec, &complete_point(spec, &probe));
    probe[j] = 1.0;
    let at1 = constraint_slacks(spec, &complete_point(spec, &probe));
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (b, s1) in at0.iter().zip(&at1) {
        let a = s1 - b;
        let need = margin - b;
        if a.abs() < 1e-15 {
            if *b < margin {
                return None;
            }
        } else if a > 0.0 {
            lo = lo.max(need / a);
        } else {
            hi = hi.min(need / a);
        }
    }
    (lo <= hi && lo.is_finite() && hi.is_finite()).then_some((lo, hi))
}

/// One-dimensional maximisation: log and linear grid scans, then golden section.
fn maximize_1d(mut g: impl FnMut(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    const GRID: usize = 64;
    let mut points: Vec<f64> = (0..=GRID).map(|k| lo + (hi - lo) * k as f64 / GRID as f64).collect();
    let span = hi - lo;
    if span > 0.0 {
        for k in 1..=GRID {
            let off = span * 10f64.powf(-12.0 * k as f64 / GRID as f64);
            points.push(lo + off);
            points.push(hi - off);
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    let values: Vec<f64> = points.iter().map(|&p| g(p)).collect();
    let best = (0..points.len())
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("grid is non-empty");
    let (mut a, mut b) = (
        points[best.saturating_sub(1)],
        points[(best + 1).min(points.len() - 1)],
    );
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs()) {
            break;
        }
        if gc >= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + phi * (b - a);
            gd = g(d);
        }
    }
    let mid = 0.5 * (a + b);
    let candidates = [(points[best], values[best]), (mid, g(mid))];
    candidates
        .into_iter()
        .filter(|c| c.1.is_finite())
        .max_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap_or((points[best], values[best]))
}

/// Coordinate-wise ascent inside the feasible set until no sweep improves by more than `tol`.
fn coordinate_ascent(
    f: &dyn Fn(&[f64]) -> f64,
    interval: &dyn Fn(&[f64], usize) -> Option<(f64, f64)>,
    start: Vec<f64>,
    tol: f64,
) -> (Vec<f64>, f64) {
    let mut point = start;
    let mut value = f(&point);
    for _ in 0..500 {
        let before = value;
        for j in 0..point.len() {
            let Some((lo, hi)) = interval(&point, j) else {
                continue;
            };
            let mut probe = point.clone();
            let (arg, v) = maximize_1d(
                |t| {
                    probe[j] = t;
                    f(&probe)
                },
                lo,
                hi,
            );
            if v > value {
                point[j] = arg;
                value = v;
            }
        }
        if value - before <= tol {
            break;
        }
    }
    (point, value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunctionResult {
    pub value: f64,
    pub argmax: TypePoint,
    pub starts: usize,
}

/// Default number of random feasible starts.
pub const DEFAULT_STARTS: usize = 10_000;
const KEEP_BEST: usize = 20;
const START_MARGIN: f64 = 1e-4;

fn check_spec(spec: &RateFunctionSpec) -> Result<()> {
    let (l, r) = (spec.l, spec.r);
    if l < 3 || l % 2 == 0 || l >= r {
        return Err(Error::InvalidParameter(format!(
            "need odd l >= 3 and l < r, got l = {l}, r = {r}"
        )));
    }
    if !(spec.theta >= 0.0 && spec.theta < 0.5) {
        return Err(Error::InvalidParameter(format!("theta = {} outside [0, 1/2)", spec.theta)));
    }
    if !(spec.lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("lambda = {}", spec.lambda)));
    }
    // The largest reachable value of sum x / l + sum y / r is below 1/l + 1/r.
    if spec.lambda >= 1.0 / l as f64 + 1.0 / r as f64 {
        return Err(Error::InfeasibleDomain(format!("lambda = {} too large", spec.lambda)));
    }
    Ok(())
}

/// Draws free coordinates with `x` on a simplex and `y_{t<r}` sharing a random
/// fraction of the edge balance, so that `y_r >= 0` by construction.
fn random_start(spec: &RateFunctionSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (l, r) = (spec.l, spec.r);
    let simplex = |k: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        let w: Vec<f64> = (0..=k).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let total: f64 = w.iter().sum();
        let scale: f64 = rng.gen();
        w[..k].iter().map(|v| v / total * scale).collect()
    };
    let x = simplex(l - 1, rng);
    let e: f64 = x.iter().enumerate().map(|(k, v)| (k + 2) as f64 / l as f64 * v).sum();
    let u = simplex(r - 2, rng);
    let y: Vec<f64> = u
        .iter()
        .enumerate()
        .map(|(k, w)| w * e * r as f64 / (k + 2) as f64)
        .collect();
    x.into_iter().chain(y).collect()
}

/// `max over the domain of f + k_theta`, by multi-start coordinate ascent.
pub fn mckay_rate_function(spec: &RateFunctionSpec, starts: usize, seed: u64) -> Result<RateFunctionResult> {
    check_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut attempts = 0usize;
    while pool.len() < starts.max(1) {
        attempts += 1;
        if attempts > 1000 * starts.max(1) {
            return Err(Error::InfeasibleDomain(format!(
                "no feasible start for lambda = {}",
                spec.lambda
            )));
        }
        let cand = random_start(spec, &mut rng);
        if feasible(spec, &cand, START_MARGIN) {
            let v = objective(spec, &cand);
            if v.is_finite() {
                pool.push((v, cand));
            }
        }
    }
    pool.sort_by(|a, b| b.0.total_cmp(&a.0));
    pool.truncate(KEEP_BEST);
    let f = |free: &[f64]| objective(spec, free);
    let interval = |free: &[f64], j: usize| coordinate_interval(spec, free, j, 0.0);
    let best = pool
        .into_iter()
        .map(|(_, start)| coordinate_ascent(&f, &interval, start, 1e-13))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("pool is non-empty");
    Ok(RateFunctionResult {
        value: best.1,
        argmax: complete_point(spec, &best.0),
        starts: starts.max(1),
    })
}

/// Restricted function on even variable degrees `z_s = x_{2s}`, `s = 1..=(l-1)/2`.
pub fn f0(l: usize, z: &[f64]) -> f64 {
    let lf = l as f64;
    let e: f64 = z.iter().enumerate().map(|(k, v)| 2.0 * (k + 1) as f64 / lf * v).sum();
    let sz: f64 = z.iter().sum();
    -(lf - 1.0) * h2(e)
        + z.iter().enumerate().map(|(k, v)| v * ln_binomial(l, 2 * (k + 1))).sum::<f64>()
        - (xlnx(1.0 - sz) + z.iter().map(|&v| xlnx(v)).sum::<f64>())
}

/// `z*_s = C(l, 2s) / 2^{l-1}`.
pub fn z_star(l: usize) -> Vec<f64> {
    (1..=(l - 1) / 2)
        .map(|s| binomial(l, 2 * s) / 2f64.powi(l as i32 - 1))
        .collect()
}

/// Embeds `z` as a point with only even `x_s` and `y_r` nonzero.
pub fn restricted_point(l: usize, r: usize, z: &[f64]) -> TypePoint {
    let mut x = vec![0.0; l - 1];
    for (k, &v) in z.iter().enumerate() {
        x[2 * (k + 1) - 2] = v;
    }
    let e: f64 = z.iter().enumerate().map(|(k, v)| 2.0 * (k + 1) as f64 / l as f64 * v).sum();
    let mut y = vec![0.0; r - 1];
    y[r - 2] = e;
    TypePoint { x, y }
}

/// Maximiser of `f0` over `l lambda <= sum z < 1`, by multi-start coordinate ascent.
pub fn maximize_f0(l: usize, lambda: f64, starts: usize, seed: u64) -> Result<(Vec<f64>, f64)> {
    if l < 3 || l % 2 == 0 {
        return Err(Error::InvalidParameter(format!("need odd l >= 3, got {l}")));
    }
    let lower = l as f64 * lambda;
    if lower >= 1.0 {
        return Err(Error::InfeasibleDomain(format!("l lambda = {lower} >= 1")));
    }
    let dim = (l - 1) / 2;
    let slacks = |z: &[f64]| -> Vec<f64> {
        let s: f64 = z.iter().sum();
        let mut out = z.to_vec();
        out.push(1.0 - s);
        out.push(s - lower);
        out
    };
    let interval = |z: &[f64], j: usize| -> Option<(f64, f64)> {
        let mut probe = z.to_vec();
        probe[j] = 0.0;
        let at0 = slacks(&probe);
        probe[j] = 1.0;
        let at1 = slacks(&probe);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (b, s1) in at0.iter().zip(&at1) {
            let a = s1 - b;
            if a.abs() < 1e-15 {
                if *b < 0.0 {
                    return None;
                }
            } else if a > 0.0 {
                lo = lo.max(-b / a);
            } else {
                hi = hi.min(-b / a);
            }
        }
        (lo <= hi).then_some((lo, hi))
    };
    let f = |z: &[f64]| f0(l, z);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut attempts = 0usize;
    while pool.len() < starts.max(1) && attempts < 1000 * starts.max(1) {
        attempts += 1;
        let z: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        if slacks(&z).iter().all(|&s| s >= START_MARGIN) {
            pool.push((f(&z), z));
        }
    }
    if pool.is_empty() {
        return Err(Error::InfeasibleDomain("no feasible start".into()));
    }
    pool.sort_by(|a, b| b.0.total_cmp(&a.0));
    pool.truncate(KEEP_BEST);
    Ok(pool
        .into_iter()
        .map(|(_, z)| coordinate_ascent(&f, &interval, z, 1e-15))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("pool is non-empty"))
}
