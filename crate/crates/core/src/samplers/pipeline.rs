//! The two-pass selection pipeline: choose `S0`, then run the chains.

use crate::error::Result;
use crate::linalg::pow_p;
use crate::samplers::{
    adaptive_volume_init, default_walk_steps, exact_volume_init, mcmc_select_with,
    mcmc_volume_init, InitMode, ParamMode, SamplingConfig, SelectedRows, SelectionResult,
};
use crate::stream::DatasetSource;

/// `err_p(X, span(rows))` in one reporting pass.
pub fn evaluate_error(source: &mut DatasetSource, rows: &SelectedRows, p: f64) -> Result<f64> {
    let basis = rows.basis(source.d())?;
    let mut err = 0.0;
    source.report_pass("evaluate error", |_, x| {
        err += pow_p(basis.residual_unchecked(x), p);
        Ok(())
    })?;
    Ok(err)
}

/// Passes of the full pipeline: the initialization plus one.
pub fn expected_passes(init: InitMode, k: usize) -> usize {
    init.passes(k) + 1
}

/// Initialization followed by [`mcmc_select_with`], with parameters sized
/// for the configuration's own mode.
pub fn select(source: &mut DatasetSource, config: &SamplingConfig) -> Result<SelectionResult> {
    select_with_mode(source, config, config.mode())
}

/// Like [`select`] with an explicit parameter mode.
pub fn select_with_mode(
    source: &mut DatasetSource,
    config: &SamplingConfig,
    mode: ParamMode,
) -> Result<SelectionResult> {
    config.validate(source.d())?;
    let params = crate::samplers::derive_params(
        config.k,
        config.epsilon,
        config.init.alpha(config.k),
        mode,
    )?
    .with_overrides(&config.overrides);
    let mark = source.log().len();
    let report_mark = source.report_log().len();
    let (s0, walk) = match config.init {
        InitMode::ExactVolume => (
            exact_volume_init(source, config.k, config.p, config.seed)?,
            None,
        ),
        InitMode::McmcVolume => {
            let steps = config
                .walk_steps
                .unwrap_or_else(|| default_walk_steps(source.n(), config.k));
            let (s0, stats) = mcmc_volume_init(source, config.k, steps, config.seed)?;
            (s0, Some(stats))
        }
        InitMode::AdaptiveKPass => (
            adaptive_volume_init(source, config.k, config.p, config.seed)?,
            None,
        ),
    };
    let init_passes = source.log().len() - mark;
    let mut result = mcmc_select_with(source, &s0, &params, config.p, config.seed, config.prefetch)?;
    result.pass_log = source.log().since(mark);
    result.report_log = source.report_log().since(report_mark);
    result.init_passes = init_passes;
    result.walk = walk;
    Ok(result)
}
