//! One-pass subset selection by Metropolis-Hastings chains.
//!
//! All proposals are drawn from the fixed mixture
//! `q(x) = ½·d(x, span S0)^p / err_p(X, S0) + 1/(2n)` during a single pass,
//! so that every later round can run its chains without touching the data.

use std::sync::Arc;

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pow_p, check_exponent, OrthonormalBasis};
use crate::samplers::{pipeline, DerivedParams, SelectedRows, SelectionResult};
use crate::seed;
use crate::stream::{DatasetSource, ReservoirBank, ReservoirDraw};

/// Upper bound on `t·l·m`, the number of prefetched proposals.
pub const MAX_SLOTS: usize = 1 << 23;

/// How the proposals are drawn during the pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalPrefetch {
    /// Two reservoir banks (weighted and uniform) mixed by fair coins.
    /// Works on any source.
    #[default]
    Reservoir,
    /// Inverse-CDF sampling from the exact `q`. In-memory sources only.
    InverseCdf,
}

/// A prefetched proposal.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub id: usize,
    pub point: Arc<[f64]>,
    /// `q(x)`.
    pub q: f64,
}

/// State of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub id: usize,
    pub point: Arc<[f64]>,
    /// Unnormalized target weight `d(x, span S_cur)^p`.
    pub p_x: f64,
    pub q_x: f64,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStats {
    pub round: usize,
    pub chain: usize,
    pub proposed: u64,
    pub accepted: u64,
}

/// `q(x) = ½·residual_p / err_s0 + 1/(2n)`.
pub fn proposal_q(residual_p: f64, err_s0: f64, n: usize) -> Result<f64> {
    if err_s0 <= 0.0 || !err_s0.is_finite() {
        return Err(Error::ExactFit);
    }
    if n == 0 {
        return Err(Error::param("n must be positive"));
    }
    Ok(0.5 * residual_p / err_s0 + 0.5 / n as f64)
}

/// Metropolis-Hastings test `p(y)q(x) / (p(x)q(y)) > u`, cross-multiplied.
#[inline]
pub fn mh_accept(p_y: f64, q_x: f64, p_x: f64, q_y: f64, u: f64) -> bool {
    p_y * q_x > u * p_x * q_y
}

struct Pool {
    /// `t·l·m` draws from `q`, chain `c` of round `i` owning
    /// `[(i·t + c)·m, (i·t + c + 1)·m)`.
    candidates: Vec<Candidate>,
    /// One uniform draw per chain, used once the target has no mass.
    floor: Vec<Candidate>,
    err0: f64,
}

fn draw_to_candidate(d: ReservoirDraw) -> Candidate {
    Candidate {
        id: d.source_id,
        point: d.point,
        q: 0.0,
    }
}

fn prefetch_reservoir(
    source: &mut DatasetSource,
    basis: &OrthonormalBasis,
    params: &DerivedParams,
    slots: usize,
    p: f64,
    seed: u64,
) -> Result<Pool> {
    let mut weighted = ReservoirBank::new(slots, seed::rng(seed, seed::WEIGHTED_BANK, 0));
    let mut uniform = ReservoirBank::new(slots, seed::rng(seed, seed::UNIFORM_BANK, 0));
    let mut err0 = 0.0;
    source.stream_pass("mcmc proposals", |i, x| {
        let w = pow_p(basis.residual_unchecked(x), p);
        err0 += w;
        weighted.offer(i, x, w)?;
        uniform.offer(i, x, 1.0)
    })?;
    let n = source.n();
    let uniform = uniform.finish()?;
    let m = params.m;
    let floor = (0..params.t * params.l)
        .map(|c| draw_to_candidate(uniform[c * m].clone()))
        .collect();
    let mut candidates: Vec<Candidate> = if err0 > 0.0 {
        let weighted = weighted.finish()?;
        let mut coins = seed::rng(seed, seed::BANK_COINS, 0);
        weighted
            .into_iter()
            .zip(uniform)
            .map(|(w, u)| draw_to_candidate(if coins.random::<bool>() { w } else { u }))
            .collect()
    } else {
        uniform.into_iter().map(draw_to_candidate).collect()
    };
    fill_q(&mut candidates, basis, err0, n, p)?;
    Ok(Pool {
        candidates,
        floor,
        err0,
    })
}

fn prefetch_inverse_cdf(
    source: &mut DatasetSource,
    basis: &OrthonormalBasis,
    params: &DerivedParams,
    slots: usize,
    p: f64,
    seed: u64,
) -> Result<Pool> {
    let points = Arc::new(source.points()?.clone());
    let mut weights = Vec::with_capacity(source.n());
    source.stream_pass("mcmc proposals", |_, x| {
        weights.push(pow_p(basis.residual_unchecked(x), p));
        Ok(())
    })?;
    let n = weights.len();
    let err0: f64 = weights.iter().sum();
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &w in &weights {
        acc += if err0 > 0.0 { 0.5 * w / err0 + 0.5 / n as f64 } else { 1.0 / n as f64 };
        cdf.push(acc);
    }
    let top = acc;
    let mut rng = seed::rng(seed, seed::PROPOSAL_CDF, 0);
    let pick = |u: f64| -> Candidate {
        let j = cdf.partition_point(|&c| c < u * top).min(n - 1);
        Candidate {
            id: j,
            point: points.row(j).into(),
            q: 0.0,
        }
    };
    let mut candidates: Vec<Candidate> = (0..slots).map(|_| pick(rng.random::<f64>())).collect();
    let mut urng = seed::rng(seed, seed::PROPOSAL_CDF, 1);
    let floor = (0..params.t * params.l)
        .map(|_| {
            let j = urng.random_range(0..n);
            Candidate {
                id: j,
                point: points.row(j).into(),
                q: 0.0,
            }
        })
        .collect();
    fill_q(&mut candidates, basis, err0, n, p)?;
    Ok(Pool {
        candidates,
        floor,
        err0,
    })
}

fn fill_q(candidates: &mut [Candidate], basis: &OrthonormalBasis, err0: f64, n: usize, p: f64) -> Result<()> {
    if err0 > 0.0 {
        candidates.par_iter_mut().try_for_each(|c| {
            c.q = proposal_q(pow_p(basis.residual_unchecked(&c.point), p), err0, n)?;
            Ok(())
        })
    } else {
        candidates.iter_mut().for_each(|c| c.q = 1.0 / n as f64);
        Ok(())
    }
}

fn run_chain(pool: &[Candidate], weights: &[f64], rng: &mut seed::SeededRng) -> (ChainState, u64) {
    let first = &pool[0];
    let mut state = ChainState {
        id: first.id,
        point: first.point.clone(),
        p_x: weights[0],
        q_x: first.q,
        steps: 0,
    };
    let mut accepted = 0;
    for (y, &p_y) in pool.iter().zip(weights).skip(1) {
        let u: f64 = rng.sample(Open01);
        state.steps += 1;
        if mh_accept(p_y, state.q_x, state.p_x, y.q, u) {
            accepted += 1;
            state.id = y.id;
            state.point = y.point.clone();
            state.p_x = p_y;
            state.q_x = y.q;
        }
    }
    (state, accepted)
}

/// Selection with the default reservoir prefetch.
pub fn mcmc_select(
    source: &mut DatasetSource,
    s0: &SelectedRows,
    params: &DerivedParams,
    p: f64,
    seed: u64,
) -> Result<SelectionResult> {
    mcmc_select_with(source, s0, params, p, seed, ProposalPrefetch::Reservoir)
}

/// `l` rounds of `t` independent chains of length `m` over proposals
/// prefetched in one pass. Each chain targets `d(·, span(S0 ∪ A_1 .. A_{i-1}))^p`
/// and its final state joins `A_i`.
pub fn mcmc_select_with(
    source: &mut DatasetSource,
    s0: &SelectedRows,
    params: &DerivedParams,
    p: f64,
    seed: u64,
    prefetch: ProposalPrefetch,
) -> Result<SelectionResult> {
    check_exponent(p)?;
    let DerivedParams { t, l, m, .. } = *params;
    if t == 0 || l == 0 || m == 0 {
        return Err(Error::param("t, l and m must be at least 1"));
    }
    let slots = params
        .slots()
        .filter(|&s| s <= MAX_SLOTS)
        .ok_or_else(|| {
            Error::param(format!(
                "t·l·m = {t}·{l}·{m} proposals exceed the limit of {MAX_SLOTS}; override m"
            ))
        })?;
    let mark = source.log().len();
    let report_mark = source.report_log().len();
    let mut basis = s0.basis(source.d())?;

    let pool = match prefetch {
        ProposalPrefetch::Reservoir => prefetch_reservoir(source, &basis, params, slots, p, seed)?,
        ProposalPrefetch::InverseCdf => prefetch_inverse_cdf(source, &basis, params, slots, p, seed)?,
    };

    let mut rows = s0.clone();
    let mut blocks = Vec::with_capacity(l);
    let mut chains = Vec::with_capacity(t * l);
    for round in 0..l {
        let lo = round * t * m;
        let round_pool = &pool.candidates[lo..lo + t * m];
        let weights: Vec<f64> = if pool.err0 > 0.0 {
            round_pool
                .par_iter()
                .map(|c| pow_p(basis.residual_unchecked(&c.point), p))
                .collect()
        } else {
            vec![0.0; t * m]
        };
        let mut block = SelectedRows::new();
        if weights.iter().all(|&w| w == 0.0) {
            for c in 0..t {
                let f = &pool.floor[round * t + c];
                block.push(f.id, f.point.clone());
                chains.push(ChainStats {
                    round,
                    chain: c,
                    proposed: 0,
                    accepted: 0,
                });
            }
        } else {
            let results: Vec<(ChainState, u64)> = (0..t)
                .into_par_iter()
                .map(|c| {
                    let mut rng = seed::rng(seed, seed::CHAIN, (round * t + c) as u64);
                    let span = c * m..(c + 1) * m;
                    run_chain(&round_pool[span.clone()], &weights[span], &mut rng)
                })
                .collect();
            for (c, (state, accepted)) in results.into_iter().enumerate() {
                chains.push(ChainStats {
                    round,
                    chain: c,
                    proposed: state.steps as u64,
                    accepted,
                });
                block.push(state.id, state.point);
            }
        }
        for (&id, row) in block.id_slice().iter().zip(block.rows()) {
            basis.push(id, row)?;
        }
        blocks.push(block.ids());
        rows.extend(&block);
    }

    let error = if pool.err0 == 0.0 {
        0.0
    } else {
        pipeline::evaluate_error(source, &rows, p)?
    };
    Ok(SelectionResult {
        s0: s0.ids(),
        blocks,
        rows,
        error,
        s0_error: Some(pool.err0),
        pass_log: source.log().since(mark),
        report_log: source.report_log().since(report_mark),
        chains,
        params: Some(*params),
        rounds_completed: l,
        init_passes: 0,
        walk: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{PointSet, SubsetIds};
    use crate::samplers::{adaptive_probabilities, derive_params, tv_distance, ParamMode};
    use crate::stream::{generate_synthetic, SynthParams};
    use proptest::prelude::*;
    use rand::Rng;

    fn params(t: usize, l: usize, m: usize) -> DerivedParams {
        derive_params(1, 0.5, 1.0, ParamMode::L2)
            .unwrap()
            .with_overrides(&crate::samplers::ParamOverrides {
                t: Some(t),
                l: Some(l),
                m: Some(m),
            })
    }

    #[test]
    fn proposal_examples() {
        assert_eq!(proposal_q(0.0, 5.0, 4).unwrap(), 0.125);
        assert_eq!(proposal_q(3.0, 4.0, 2).unwrap(), 0.625);
        assert_eq!(proposal_q(1.0, 4.0, 2).unwrap(), 0.375);
        for n in [1, 3, 10] {
            let q = proposal_q(2.0, 2.0 * n as f64, n).unwrap();
            assert!((q - 1.0 / n as f64).abs() < 1e-15);
        }
        assert!(matches!(proposal_q(1.0, 0.0, 3), Err(Error::ExactFit)));
    }

    #[test]
    fn accept_examples() {
        for u in [1e-9, 0.3, 0.999_999] {
            assert!(mh_accept(2.0, 1.0, 1.0, 1.0, u));
            assert!(!mh_accept(0.0, 1.0, 1.0, 1.0, u));
            assert!(mh_accept(1.0, 0.5, 0.0, 0.5, u));
        }
    }

    #[test]
    fn acceptance_frequency_matches_ratio() {
        let mut rng = seed::rng(3, 0, 0);
        let r: f64 = 0.3;
        let trials = 100_000;
        let hits = (0..trials)
            .filter(|_| mh_accept(r, 1.0, 1.0, 1.0, rng.sample(Open01)))
            .count();
        let f = hits as f64 / trials as f64;
        let sigma = (r * (1.0 - r) / trials as f64).sqrt();
        assert!((f - r).abs() <= 3.0 * sigma, "{f}");
    }

    proptest! {
        #[test]
        fn q_has_floor_and_sums_to_one(w in proptest::collection::vec(0.0f64..10.0, 1..40)) {
            let n = w.len();
            let err: f64 = w.iter().sum();
            prop_assume!(err > 0.0);
            let mut total = 0.0;
            for &wi in &w {
                let q = proposal_q(wi, err, n).unwrap();
                prop_assert!(q >= 0.5 / n as f64);
                total += q;
            }
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    fn instance() -> PointSet {
        generate_synthetic(&SynthParams::new(80, 6, 3, 0.3, 11)).unwrap().0
    }

    #[test]
    fn one_pass_and_output_size() {
        let x = instance();
        let s0 = SelectedRows::from_points(&x, &SubsetIds(vec![1, 2])).unwrap();
        let mut src = DatasetSource::in_memory(x);
        let r = mcmc_select(&mut src, &s0, &params(4, 3, 20), 2.0, 9).unwrap();
        assert_eq!(r.pass_log.total_passes(), 1);
        assert_eq!(r.pass_log.completed_passes(), 1);
        assert_eq!(r.report_log.total_passes(), 1);
        assert_eq!(r.len(), 2 + 4 * 3);
        assert_eq!(r.blocks.len(), 3);
        assert!(r.blocks.iter().all(|b| b.len() == 4));
        assert!(r.error <= r.s0_error.unwrap() + 1e-9);
        assert_eq!(r.chains.len(), 12);
        // once the span is all of R^6 the later rounds take the floor
        assert!(r.chains.iter().filter(|c| c.round == 0).all(|c| c.proposed == 19));
        assert!(r.chains.iter().all(|c| c.proposed == 19 || c.proposed == 0));
    }

    #[test]
    fn streaming_matches_in_memory() {
        let x = Arc::new(instance());
        let s0 = SelectedRows::from_points(&x, &SubsetIds(vec![0])).unwrap();
        let mut a = DatasetSource::in_memory(x.clone());
        let mut b = DatasetSource::streaming_view(x);
        let ra = mcmc_select(&mut a, &s0, &params(5, 2, 30), 2.0, 4).unwrap();
        let rb = mcmc_select(&mut b, &s0, &params(5, 2, 30), 2.0, 4).unwrap();
        assert_eq!(ra.selected(), rb.selected());
        assert_eq!(ra.error.to_bits(), rb.error.to_bits());
        assert_eq!(ra.chains, rb.chains);
    }

    #[test]
    fn inverse_cdf_needs_memory() {
        let x = instance();
        let s0 = SelectedRows::from_points(&x, &SubsetIds(vec![0])).unwrap();
        let mut b = DatasetSource::streaming_view(x);
        let r = mcmc_select_with(&mut b, &s0, &params(2, 1, 5), 2.0, 4, ProposalPrefetch::InverseCdf);
        assert!(matches!(r, Err(Error::StreamingAccess)));
    }

    #[test]
    fn exact_s0_uses_uniform_floor() {
        let (x, _) = generate_synthetic(&SynthParams::new(30, 5, 2, 0.0, 2)).unwrap();
        let b = crate::linalg::orthonormal_basis(&x, &SubsetIds(vec![0, 1])).unwrap();
        assert_eq!(b.rank(), 2);
        let s0 = SelectedRows::from_points(&x, &SubsetIds(vec![0, 1])).unwrap();
        let mut src = DatasetSource::in_memory(x);
        let r = mcmc_select(&mut src, &s0, &params(3, 2, 10), 2.0, 1).unwrap();
        assert_eq!(r.error, 0.0);
        assert_eq!(r.s0_error, Some(0.0));
        assert_eq!(r.len(), 2 + 6);
        assert_eq!(r.pass_log.total_passes(), 1);
    }

    #[test]
    fn long_chain_matches_adaptive_distribution() {
        let rows: Vec<[f64; 3]> = vec![
            [1.0, 0.0, 0.0],
            [0.2, 1.0, 0.0],
            [0.0, 0.3, 2.0],
            [1.0, 1.0, 1.0],
            [0.5, -0.5, 0.1],
            [2.0, 0.1, -0.3],
            [0.0, 0.0, 0.4],
            [-1.0, 0.2, 0.2],
        ];
        let x = Arc::new(PointSet::from_rows(&rows).unwrap());
        let s0_ids = SubsetIds(vec![0]);
        let exact = adaptive_probabilities(&x, &s0_ids, 2.0).unwrap();
        let s0 = SelectedRows::from_points(&x, &s0_ids).unwrap();
        // t = 20000 chains in one round: one draw per chain
        let mut src = DatasetSource::in_memory(x);
        let r = mcmc_select(&mut src, &s0, &params(20_000, 1, 60), 2.0, 8).unwrap();
        let mut f = vec![0.0; 8];
        r.blocks[0].as_slice().iter().for_each(|&i| f[i] += 1.0 / 20_000.0);
        assert!(tv_distance(&f, &exact) < 0.03, "{f:?} vs {exact:?}");
    }

    #[test]
    fn inverse_cdf_agrees_with_reservoir() {
        let x = Arc::new(instance());
        let s0 = SelectedRows::from_points(&x, &SubsetIds(vec![3])).unwrap();
        let n = x.n();
        let hist = |pf| {
            let mut src = DatasetSource::in_memory(x.clone());
            let r = mcmc_select_with(&mut src, &s0, &params(20_000, 1, 1), 2.0, 5, pf).unwrap();
            let mut f = vec![0.0; n];
            r.blocks[0].as_slice().iter().for_each(|&i| f[i] += 1.0 / 20_000.0);
            f
        };
        let a = hist(ProposalPrefetch::Reservoir);
        let b = hist(ProposalPrefetch::InverseCdf);
        assert!(tv_distance(&a, &b) < 0.06);
    }

    #[test]
    fn slot_guard() {
        let x = instance();
        let s0 = SelectedRows::from_points(&x, &SubsetIds(vec![0])).unwrap();
        let mut src = DatasetSource::in_memory(x);
        assert!(mcmc_select(&mut src, &s0, &params(1000, 10, 10_000), 2.0, 0).is_err());
        assert_eq!(src.log().total_passes(), 0);
    }
}
