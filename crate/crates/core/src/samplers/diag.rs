//! Distributional diagnostics for the proposal chains on small instances.

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, pow_p, PointSet, SubsetIds};
use crate::samplers::mcmc::mh_accept;
use crate::seed;

/// Largest instance the diagnostic accepts.
pub const MAX_DIAG_POINTS: usize = 4096;
/// Largest instance whose chain law is computed exactly.
pub const MAX_EXACT_CHAIN: usize = 64;

const CHUNK: usize = 4096;

/// `½ Σ |a_i − b_i|`, treating missing entries as zero.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|i| (at(a, i) - at(b, i)).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvDiagnostic {
    pub n: usize,
    pub m: usize,
    pub trials: usize,
    /// TV between the end states of `trials` chains and the exact target.
    pub tv_empirical: f64,
    /// TV between the exact law of the chain's end state and the target
    /// (small instances only).
    pub tv_exact: Option<f64>,
    /// TV between `q` and the target, i.e. the chain with `m = 1`.
    pub tv_start: f64,
    /// `max_x p(x) / q(x)`.
    pub gamma: f64,
    /// `(1 − 1/γ)^(m−1)`.
    pub contraction_bound: f64,
    pub acceptance_rate: f64,
    /// `err_p(X, s_current) / err_p(X, s0)`.
    pub error_ratio: f64,
    pub target: Vec<f64>,
    pub empirical: Vec<f64>,
}

struct Laws {
    /// Unnormalized target weights.
    w: Vec<f64>,
    target: Vec<f64>,
    q: Vec<f64>,
    err0: f64,
    err: f64,
}

fn laws(points: &PointSet, s0: &SubsetIds, s_current: &SubsetIds, p: f64) -> Result<Laws> {
    let n = points.n();
    let b0 = linalg::orthonormal_basis(points, s0)?;
    let b = linalg::orthonormal_basis(points, s_current)?;
    let w0: Vec<f64> = points.rows().map(|x| pow_p(b0.residual_unchecked(x), p)).collect();
    let w: Vec<f64> = points.rows().map(|x| pow_p(b.residual_unchecked(x), p)).collect();
    let err0: f64 = w0.iter().sum();
    let err: f64 = w.iter().sum();
    if err <= 0.0 {
        return Err(Error::ExactFit);
    }
    let q = w0
        .iter()
        .map(|&r| {
            if err0 > 0.0 {
                0.5 * r / err0 + 0.5 / n as f64
            } else {
                1.0 / n as f64
            }
        })
        .collect();
    let target = w.iter().map(|v| v / err).collect();
    Ok(Laws {
        w,
        target,
        q,
        err0,
        err,
    })
}

fn accept_prob(p_x: f64, q_x: f64, p_y: f64, q_y: f64) -> f64 {
    if p_x == 0.0 {
        if p_y > 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (p_y * q_x / (p_x * q_y)).min(1.0)
    }
}

/// Exact law of the end state of an `m`-step chain (a `q`-draw followed by
/// `m − 1` proposals), by iterating the transition matrix.
pub fn exact_chain_distribution(
    points: &PointSet,
    s0: &SubsetIds,
    s_current: &SubsetIds,
    m: usize,
    p: f64,
) -> Result<Vec<f64>> {
    let n = points.n();
    if n > MAX_EXACT_CHAIN {
        return Err(Error::EnumerationTooLarge {
            what: "chain transition matrix",
            size: n as f64,
            limit: MAX_EXACT_CHAIN as f64,
        });
    }
    if m == 0 {
        return Err(Error::param("m must be at least 1"));
    }
    let l = laws(points, s0, s_current, p)?;
    let mut kernel = vec![0.0; n * n];
    for x in 0..n {
        let mut stay = 1.0;
        for y in 0..n {
            if y != x {
                let k = l.q[y] * accept_prob(l.w[x], l.q[x], l.w[y], l.q[y]);
                kernel[x * n + y] = k;
                stay -= k;
            }
        }
        kernel[x * n + x] = stay.max(0.0);
    }
    let mut pi = l.q.clone();
    for _ in 1..m {
        let mut next = vec![0.0; n];
        for x in 0..n {
            for y in 0..n {
                next[y] += pi[x] * kernel[x * n + y];
            }
        }
        pi = next;
    }
    Ok(pi)
}

/// Runs `trials` independent chains of length `m` with proposals from
/// `q(·|s0)` and target `p(·|s_current)`, and compares the end states with
/// the exact target.
pub fn tv_distance_diag(
    points: &PointSet,
    s0: &SubsetIds,
    s_current: &SubsetIds,
    m: usize,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<TvDiagnostic> {
    let n = points.n();
    if n > MAX_DIAG_POINTS {
        return Err(Error::EnumerationTooLarge {
            what: "points for the exact target",
            size: n as f64,
            limit: MAX_DIAG_POINTS as f64,
        });
    }
    if m == 0 || trials == 0 {
        return Err(Error::param("m and trials must be at least 1"));
    }
    let l = laws(points, s0, s_current, p)?;
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &q in &l.q {
        acc += q;
        cdf.push(acc);
    }
    let draw = |rng: &mut seed::SeededRng| -> usize {
        let u: f64 = rng.random::<f64>() * acc;
        cdf.partition_point(|&c| c <= u).min(n - 1)
    };

    let chunks = trials.div_ceil(CHUNK);
    let (counts, accepted) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed::rng(seed, seed::DIAG, c as u64);
            let mut counts = vec![0u64; n];
            let mut accepted = 0u64;
            let len = CHUNK.min(trials - c * CHUNK);
            for _ in 0..len {
                let mut x = draw(&mut rng);
                for _ in 1..m {
                    let y = draw(&mut rng);
                    let u: f64 = rng.sample(Open01);
                    if mh_accept(l.w[y], l.q[x], l.w[x], l.q[y], u) {
                        accepted += 1;
                        x = y;
                    }
                }
                counts[x] += 1;
            }
            (counts, accepted)
        })
        .reduce(
            || (vec![0u64; n], 0u64),
            |(mut a, sa), (b, sb)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                (a, sa + sb)
            },
        );
    let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    let gamma = l
        .target
        .iter()
        .zip(&l.q)
        .map(|(p, q)| p / q)
        .fold(0.0, f64::max);
    let tv_exact = if n <= MAX_EXACT_CHAIN {
        Some(tv_distance(
            &exact_chain_distribution(points, s0, s_current, m, p)?,
            &l.target,
        ))
    } else {
        None
    };
    let proposals = (trials as u64) * (m as u64 - 1);
    Ok(TvDiagnostic {
        n,
        m,
        trials,
        tv_empirical: tv_distance(&empirical, &l.target),
        tv_exact,
        tv_start: tv_distance(&l.q, &l.target),
        gamma,
        contraction_bound: (1.0 - 1.0 / gamma).max(0.0).powi(m as i32 - 1),
        acceptance_rate: if proposals > 0 {
            accepted as f64 / proposals as f64
        } else {
            0.0
        },
        error_ratio: if l.err0 > 0.0 { l.err / l.err0 } else { f64::INFINITY },
        target: l.target,
        empirical,
    })
}
