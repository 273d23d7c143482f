//! Repeated trials of one algorithm on one dataset, evaluated against the
//! rank-`k` optimum.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, accumulate_outer, best_rank_k_subspace_in_span, optimal_error_from_gram, OrthonormalBasis,
};
use crate::outliers::{nearest_inliers_pass, robust_select, OutlierConfig};
use crate::report::ReportRow;
use crate::samplers::{
    self, adaptive_sample, adaptive_volume_init, default_walk_steps, derive_params, evaluate_error,
    exact_volume_init, mcmc_volume_init, InitMode, ParamOverrides, SamplingConfig, SelectedRows,
};
use crate::seed;
use crate::stream::{
    generate_synthetic, weighted_reservoir_sample, AccessMode, DatasetSource, GroundTruth,
    SynthParams,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Volume-sampling initialization plus the one-pass chains.
    Mcmc,
    /// Initialization plus `l` passes of adaptive sampling.
    Adaptive,
    /// `k + t·l` squared-length draws in one pass.
    Fkv,
    /// The top-`k` singular subspace.
    SvdOracle,
    VolumeExact,
    VolumeMcmc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Mcmc,
        Algorithm::Adaptive,
        Algorithm::Fkv,
        Algorithm::SvdOracle,
        Algorithm::VolumeExact,
        Algorithm::VolumeMcmc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Mcmc => "mcmc",
            Algorithm::Adaptive => "adaptive",
            Algorithm::Fkv => "fkv",
            Algorithm::SvdOracle => "svd-oracle",
            Algorithm::VolumeExact => "volume-exact",
            Algorithm::VolumeMcmc => "volume-mcmc",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::param(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DatasetSpec {
    File(PathBuf),
    Synthetic(SynthParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetSpec,
    pub algorithm: Algorithm,
    pub k: usize,
    pub p: f64,
    pub epsilon: f64,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub init: InitMode,
    pub overrides: ParamOverrides,
    pub walk_steps: Option<usize>,
    pub mode: AccessMode,
    /// Report zero wall time so that reports are byte-reproducible.
    pub deterministic: bool,
    /// Ground truth for file datasets (synthetic ones carry their own).
    pub truth: Option<GroundTruth>,
}

impl ExperimentSpec {
    pub fn new(dataset: DatasetSpec, algorithm: Algorithm, k: usize) -> Self {
        ExperimentSpec {
            dataset,
            algorithm,
            k,
            p: 2.0,
            epsilon: 0.5,
            beta: None,
            lambda: None,
            trials: 1,
            seed: 0,
            init: InitMode::ExactVolume,
            overrides: ParamOverrides::default(),
            walk_steps: None,
            mode: AccessMode::InMemory,
            deterministic: false,
            truth: None,
        }
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::param("trials must be at least 1"));
        }
        if self.k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::param(format!("epsilon must be in (0, 1), got {}", self.epsilon)));
        }
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(Error::param(format!("p must be >= 2, got {}", self.p)));
        }
        let needs_l2 = matches!(self.algorithm, Algorithm::SvdOracle | Algorithm::VolumeMcmc)
            || (matches!(self.algorithm, Algorithm::Mcmc | Algorithm::Adaptive)
                && self.init == InitMode::McmcVolume);
        if needs_l2 && self.p != 2.0 {
            return Err(Error::param(format!(
                "{} with {} initialization requires p = 2",
                self.algorithm, self.init
            )));
        }
        if let Some(beta) = self.beta {
            OutlierConfig::new(beta, self.lambda.unwrap_or(1.0))?;
            if self.p != 2.0 {
                return Err(Error::param("outlier evaluation requires p = 2"));
            }
        }
        if self.lambda.is_some() && self.beta.is_none() {
            return Err(Error::param("lambda needs beta"));
        }
        if self.lambda.is_some() && self.algorithm != Algorithm::Mcmc {
            return Err(Error::param("lambda only applies to the mcmc algorithm"));
        }
        if let DatasetSpec::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        Ok(())
    }

    fn sampling(&self, seed: u64) -> SamplingConfig {
        SamplingConfig {
            k: self.k,
            p: self.p,
            epsilon: self.epsilon,
            seed,
            init: self.init,
            overrides: self.overrides,
            walk_steps: self.walk_steps,
            prefetch: Default::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub median_ratio: Option<f64>,
    pub median_ratio_rank_k: Option<f64>,
    pub median_inlier_ratio: Option<f64>,
    pub median_inlier_ratio_rank_k: Option<f64>,
    pub mean_ratio_rank_k: Option<f64>,
    /// Pass count of every trial, when they agree.
    pub passes: Option<usize>,
    /// Trials whose pass log did not match the expected count.
    pub pass_failures: Vec<String>,
    /// `Σ d(x, planted)²` over true inliers divided by the total.
    pub observed_lambda: Option<f64>,
    pub optimum: Option<f64>,
    pub inlier_optimum: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub rows: Vec<ReportRow>,
    pub summary: Summary,
    pub warnings: Vec<String>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[h] } else { 0.5 * (v[h - 1] + v[h]) })
}

/// Data-dependent quantities shared by all trials, from one reporting pass.
struct Context {
    base: DatasetSource,
    gram: Vec<f64>,
    /// Over the true inliers, when they are known.
    gram_in: Option<Vec<f64>>,
    optimum: Option<f64>,
    inlier_optimum: Option<f64>,
    observed_lambda: Option<f64>,
}

fn open(spec: &ExperimentSpec) -> Result<(DatasetSource, Option<GroundTruth>)> {
    match &spec.dataset {
        DatasetSpec::File(path) => Ok((DatasetSource::open(path, spec.mode)?, spec.truth.clone())),
        DatasetSpec::Synthetic(params) => {
            let (points, truth) = generate_synthetic(params)?;
            let points = Arc::new(points);
            let source = match spec.mode {
                AccessMode::InMemory => DatasetSource::in_memory(points),
                AccessMode::Streaming => DatasetSource::streaming_view(points),
            };
            Ok((source, Some(truth)))
        }
    }
}

fn context(spec: &ExperimentSpec) -> Result<Context> {
    let (mut base, truth) = open(spec)?;
    let (n, d) = (base.n(), base.d());
    if spec.k > d {
        return Err(Error::param(format!("k must be in 1..={d}, got {}", spec.k)));
    }
    let truth = truth.filter(|t| t.params.d == d && t.inlier_ids.iter().all(|&i| i < n));
    let mut is_inlier = None;
    let mut planted = None;
    if let (Some(_), Some(t)) = (spec.beta, &truth) {
        let mut mask = vec![false; n];
        t.inlier_ids.iter().for_each(|&i| mask[i] = true);
        is_inlier = Some(mask);
        planted = Some(t.basis());
    }
    let mut gram = vec![0.0; d * d];
    let mut gram_in = vec![0.0; d * d];
    let (mut tot, mut inl) = (0.0, 0.0);
    base.report_pass("gram", |i, x| {
        accumulate_outer(&mut gram, x);
        if let Some(mask) = &is_inlier {
            let r = planted.as_ref().expect("set with mask").residual_unchecked(x);
            tot += r * r;
            if mask[i] {
                accumulate_outer(&mut gram_in, x);
                inl += r * r;
            }
        }
        Ok(())
    })?;
    let optimum = (spec.p == 2.0).then(|| optimal_error_from_gram(&gram, d, spec.k));
    let gram_in = is_inlier.is_some().then_some(gram_in);
    let (inlier_optimum, observed_lambda) = if let Some(gram_in) = &gram_in {
        (
            Some(optimal_error_from_gram(gram_in, d, spec.k)),
            Some(if tot == 0.0 { 1.0 } else { inl / tot }),
        )
    } else {
        (None, None)
    };
    base.clear_logs();
    Ok(Context {
        base,
        gram,
        gram_in,
        optimum,
        inlier_optimum,
        observed_lambda,
    })
}

struct TrialRun {
    rows: SelectedRows,
    /// A basis to evaluate when it is not the span of `rows`.
    basis: Option<OrthonormalBasis>,
    err: Option<f64>,
    passes: usize,
    expected_passes: usize,
    t: Option<usize>,
    l: Option<usize>,
    m: Option<usize>,
    acceptance: Option<f64>,
    warnings: Vec<String>,
}

impl TrialRun {
    fn new(rows: SelectedRows, passes: usize, expected_passes: usize) -> Self {
        TrialRun {
            rows,
            basis: None,
            err: None,
            passes,
            expected_passes,
            t: None,
            l: None,
            m: None,
            acceptance: None,
            warnings: Vec::new(),
        }
    }
}

fn init_expected(init: InitMode, k: usize, s0_len: usize) -> usize {
    match init {
        // an exact fit stops after the pass that detected it
        InitMode::AdaptiveKPass if s0_len < k => s0_len + 1,
        _ => init.passes(k),
    }
}

fn run_algorithm(spec: &ExperimentSpec, ctx: &Context, source: &mut DatasetSource, seed: u64) -> Result<TrialRun> {
    let k = spec.k;
    let cfg = spec.sampling(seed);
    let derived = || -> Result<samplers::DerivedParams> { cfg.derive() };
    match spec.algorithm {
        Algorithm::Mcmc => {
            let (res, warnings) = match (spec.beta, spec.lambda) {
                (Some(beta), Some(lambda)) => {
                    let oc = OutlierConfig::new(beta, lambda)?;
                    let r = robust_select(source, &cfg, &oc, ctx.observed_lambda)?;
                    (r.selection, r.warnings)
                }
                _ => (samplers::select(source, &cfg)?, Vec::new()),
            };
            let s0_len = res.s0.len();
            let mut run = TrialRun::new(
                res.rows.clone(),
                res.pass_log.total_passes(),
                init_expected(spec.init, k, s0_len) + 1,
            );
            run.err = Some(res.error);
            run.acceptance = res.acceptance_rate();
            if let Some(p) = res.params {
                (run.t, run.l, run.m) = (Some(p.t), Some(p.l), Some(p.m));
            }
            run.warnings = warnings;
            Ok(run)
        }
        Algorithm::Adaptive => {
            let params = derived()?;
            let s0 = match spec.init {
                InitMode::ExactVolume => exact_volume_init(source, k, spec.p, seed)?,
                InitMode::McmcVolume => {
                    let steps = spec.walk_steps.unwrap_or_else(|| default_walk_steps(source.n(), k));
                    mcmc_volume_init(source, k, steps, seed)?.0
                }
                InitMode::AdaptiveKPass => adaptive_volume_init(source, k, spec.p, seed)?,
            };
            let init_passes = source.log().total_passes();
            let res = adaptive_sample(source, &s0, params.t, params.l, spec.p, seed)?;
            let rounds = if res.rounds_completed < params.l {
                res.rounds_completed + 1
            } else {
                params.l
            };
            let mut run = TrialRun::new(
                res.rows,
                source.log().total_passes(),
                init_expected(spec.init, k, s0.len()) + rounds,
            );
            debug_assert!(init_passes <= run.passes);
            run.err = Some(res.error);
            (run.t, run.l) = (Some(params.t), Some(params.l));
            Ok(run)
        }
        Algorithm::Fkv => {
            let params = derived()?;
            let count = k + params.t * params.l;
            let draws = weighted_reservoir_sample(
                source,
                "squared-length sampling",
                |x| linalg::pow_p(linalg::norm(x), spec.p),
                count,
                seed,
            )?;
            let mut rows = SelectedRows::new();
            for d in draws {
                rows.push(d.source_id, d.point);
            }
            let mut run = TrialRun::new(rows, source.log().total_passes(), 1);
            (run.t, run.l) = (Some(params.t), Some(params.l));
            Ok(run)
        }
        Algorithm::SvdOracle => {
            let d = source.d();
            let mut gram = vec![0.0; d * d];
            source.stream_pass("gram", |_, x| {
                accumulate_outer(&mut gram, x);
                Ok(())
            })?;
            let eig = linalg::symmetric_eigen(&gram, d);
            let rows_v: Vec<(usize, &[f64])> = eig.vectors.chunks_exact(d).take(k).enumerate().collect();
            let basis = OrthonormalBasis::from_rows(d, rows_v.iter().copied())?;
            let mut run = TrialRun::new(SelectedRows::new(), source.log().total_passes(), 1);
            run.err = Some(optimal_error_from_gram(&gram, d, k));
            run.basis = Some(basis);
            Ok(run)
        }
        Algorithm::VolumeExact => {
            let s0 = exact_volume_init(source, k, spec.p, seed)?;
            Ok(TrialRun::new(s0, source.log().total_passes(), 1))
        }
        Algorithm::VolumeMcmc => {
            let steps = spec.walk_steps.unwrap_or_else(|| default_walk_steps(source.n(), k));
            let (s0, stats) = mcmc_volume_init(source, k, steps, seed)?;
            let mut run = TrialRun::new(s0, source.log().total_passes(), 1);
            run.acceptance = (stats.proposed > 0).then(|| stats.accepted as f64 / stats.proposed as f64);
            Ok(run)
        }
    }
}

fn run_trial(spec: &ExperimentSpec, ctx: &Context, trial: usize) -> Result<(ReportRow, Vec<String>, Option<String>)> {
    let seed = seed::child(spec.seed, seed::TRIAL, trial as u64);
    let mut source = ctx.base.clone();
    source.clear_logs();
    let start = Instant::now();
    let run = run_algorithm(spec, ctx, &mut source, seed)?;
    let elapsed = start.elapsed().as_secs_f64();

    let d = source.d();
    let basis = match &run.basis {
        Some(b) => b.clone(),
        None => run.rows.basis(d)?,
    };
    let err = match run.err {
        Some(e) => e,
        None => evaluate_error(&mut source, &run.rows, spec.p)?,
    };
    let mut row = ReportRow::new(trial, spec.algorithm.name(), spec.k, spec.p, seed);
    row.err = err;
    row.passes = run.passes;
    row.subset_size = if run.basis.is_some() { basis.rank() } else { run.rows.len() };
    row.t = run.t;
    row.l = run.l;
    row.m = run.m;
    row.wall_time_s = if spec.deterministic { 0.0 } else { elapsed };
    row.acceptance_rate = run.acceptance;
    if spec.p == 2.0 {
        let (_, ek) = best_rank_k_subspace_in_span(&ctx.gram, &basis, spec.k);
        row.err_rank_k = Some(if run.basis.is_some() { err } else { ek });
    }
    if let Some(opt) = ctx.optimum {
        row.optimum = Some(opt);
        if opt > 0.0 {
            row.ratio = Some(err / opt);
            row.ratio_rank_k = row.err_rank_k.map(|e| e / opt);
        } else {
            row.ratio = Some(if err == 0.0 { 1.0 } else { f64::INFINITY });
            row.ratio_rank_k = row.err_rank_k.map(|e| if e == 0.0 { 1.0 } else { f64::INFINITY });
        }
    }
    if let Some(beta) = spec.beta {
        let inl = nearest_inliers_pass(&mut source, &basis, beta)?;
        row.inlier_error = Some(inl.inlier_error);
        if let Some(opt_in) = ctx.inlier_optimum.filter(|&o| o > 0.0) {
            row.inlier_ratio = Some(inl.inlier_error / opt_in);
            if let Some(gram_in) = &ctx.gram_in {
                let (bk, _) = best_rank_k_subspace_in_span(gram_in, &basis, spec.k);
                let inl_k = nearest_inliers_pass(&mut source, &bk, beta)?;
                row.inlier_ratio_rank_k = Some(inl_k.inlier_error / opt_in);
            }
        }
    }
    let pass_failure = source
        .log()
        .assert_passes(run.expected_passes, source.n())
        .err()
        .map(|e| format!("trial {trial}: {e}"));
    Ok((row, run.warnings, pass_failure))
}

/// Runs every trial (in parallel, each with its own derived seed) and
/// returns the rows in trial order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let ctx = context(spec)?;
    if spec.algorithm == Algorithm::Mcmc || spec.algorithm == Algorithm::Adaptive {
        spec.sampling(spec.seed).validate(ctx.base.d())?;
        derive_params(spec.k, spec.epsilon, spec.init.alpha(spec.k), spec.sampling(0).mode())?;
    }
    let results: Vec<(ReportRow, Vec<String>, Option<String>)> = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(spec, &ctx, t))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    let mut pass_failures = Vec::new();
    for (row, w, f) in results {
        rows.push(row);
        for w in w {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        pass_failures.extend(f);
    }
    let collect = |f: fn(&ReportRow) -> Option<f64>| -> Vec<f64> { rows.iter().filter_map(f).collect() };
    let rank_k = collect(|r| r.ratio_rank_k);
    let passes = rows
        .first()
        .map(|r| r.passes)
        .filter(|&p| rows.iter().all(|r| r.passes == p));
    let summary = Summary {
        trials: rows.len(),
        median_ratio: median(&collect(|r| r.ratio)),
        median_ratio_rank_k: median(&rank_k),
        median_inlier_ratio: median(&collect(|r| r.inlier_ratio)),
        median_inlier_ratio_rank_k: median(&collect(|r| r.inlier_ratio_rank_k)),
        mean_ratio_rank_k: (!rank_k.is_empty()).then(|| rank_k.iter().sum::<f64>() / rank_k.len() as f64),
        passes,
        pass_failures,
        observed_lambda: ctx.observed_lambda,
        optimum: ctx.optimum,
        inlier_optimum: ctx.inlier_optimum,
    };
    Ok(ExperimentOutcome {
        rows,
        summary,
        warnings,
    })
}
