use crate::error::{Error, Result};
use crate::linalg::{self, check_exponent, pow_p, PointSet, SubsetIds};
use crate::samplers::{pipeline, SelectedRows, SelectionResult};
use crate::seed;
use crate::stream::{weighted_reservoir_sample, DatasetSource};

/// `count` i.i.d. draws with probability proportional to `‖x‖^p`, in one pass.
pub fn squared_length_sample(
    source: &mut DatasetSource,
    count: usize,
    p: f64,
    seed: u64,
) -> Result<SubsetIds> {
    check_exponent(p)?;
    let draws = weighted_reservoir_sample(
        source,
        "squared-length sampling",
        |x| pow_p(linalg::norm(x), p),
        count,
        seed,
    )?;
    Ok(SubsetIds(draws.iter().map(|d| d.source_id).collect()))
}

/// `t` i.i.d. draws with probability proportional to `d(x, span(current))^p`,
/// in one pass. Fails with [`Error::ExactFit`] when every residual is zero.
pub fn adaptive_sample_round(
    source: &mut DatasetSource,
    current: &SelectedRows,
    t: usize,
    p: f64,
    seed: u64,
) -> Result<SelectedRows> {
    check_exponent(p)?;
    let basis = current.basis(source.d())?;
    let draws = weighted_reservoir_sample(
        source,
        "adaptive sampling round",
        |x| pow_p(basis.residual_unchecked(x), p),
        t,
        seed,
    )
    .map_err(|e| match e {
        Error::DegenerateWeights => Error::ExactFit,
        e => e,
    })?;
    let mut out = SelectedRows::new();
    for d in draws {
        out.push(d.source_id, d.point);
    }
    Ok(out)
}

/// `l` rounds of adaptive sampling starting from `s0`, one pass per round.
/// Stops early once the selection fits the data exactly.
pub fn adaptive_sample(
    source: &mut DatasetSource,
    s0: &SelectedRows,
    t: usize,
    l: usize,
    p: f64,
    seed: u64,
) -> Result<SelectionResult> {
    let mark = source.log().len();
    let report_mark = source.report_log().len();
    let mut rows = s0.clone();
    let mut blocks = Vec::with_capacity(l);
    for round in 0..l {
        let round_seed = seed::child(seed, seed::ADAPTIVE_ROUND, round as u64);
        match adaptive_sample_round(source, &rows, t, p, round_seed) {
            Ok(block) => {
                blocks.push(block.ids());
                rows.extend(&block);
            }
            Err(Error::ExactFit) => break,
            Err(e) => return Err(e),
        }
    }
    let error = pipeline::evaluate_error(source, &rows, p)?;
    Ok(SelectionResult {
        s0: s0.ids(),
        rounds_completed: blocks.len(),
        blocks,
        rows,
        error,
        s0_error: None,
        pass_log: source.log().since(mark),
        report_log: source.report_log().since(report_mark),
        chains: Vec::new(),
        params: None,
        init_passes: 0,
        walk: None,
    })
}

/// `k` rounds of single-point adaptive sampling (`k` passes), which is
/// volume sampling up to a factor `k!`. Returns fewer than `k` points if the
/// data is fitted exactly before that.
pub fn adaptive_volume_init(
    source: &mut DatasetSource,
    k: usize,
    p: f64,
    seed: u64,
) -> Result<SelectedRows> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    let mut rows = SelectedRows::new();
    for round in 0..k {
        let round_seed = seed::child(seed, seed::INIT, round as u64);
        match adaptive_sample_round(source, &rows, 1, p, round_seed) {
            Ok(block) => rows.extend(&block),
            Err(Error::ExactFit) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

/// Exact single-draw adaptive sampling probabilities with respect to
/// `span(points[current])`.
pub fn adaptive_probabilities(points: &PointSet, current: &SubsetIds, p: f64) -> Result<Vec<f64>> {
    check_exponent(p)?;
    let basis = linalg::orthonormal_basis(points, current)?;
    let w: Vec<f64> = points
        .rows()
        .map(|x| pow_p(basis.residual_unchecked(x), p))
        .collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return Err(Error::ExactFit);
    }
    Ok(w.into_iter().map(|v| v / total).collect())
}
