//! `ℓ2` subspace approximation with outliers.
//!
//! The error of a subspace `V` is measured over `N_β(V)`, the `⌈(1−β)n⌉`
//! points nearest to `V`. Sampling itself never looks at `β`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{OrthonormalBasis, PointSet};
use crate::samplers::params::ceil_tol;
use crate::samplers::{pipeline, ParamMode, SamplingConfig, SelectionResult};
use crate::stream::DatasetSource;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierConfig {
    /// Upper bound on the outlier fraction, in `[0, 1)`.
    pub beta: f64,
    /// Assumed lower bound on the inlier share of the error, in `(0, 1]`.
    pub lambda: f64,
}

impl OutlierConfig {
    pub fn new(beta: f64, lambda: f64) -> Result<Self> {
        check_beta(beta)?;
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::param(format!("lambda must be in (0, 1], got {lambda}")));
        }
        Ok(OutlierConfig { beta, lambda })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::param(format!("beta must be in [0, 1), got {beta}")));
    }
    Ok(())
}

/// `N_β(V)` and the error over it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InlierSet {
    /// Ascending.
    pub ids: Vec<usize>,
    /// `Σ_{i ∈ ids} d(x_i, V)²`.
    pub inlier_error: f64,
    /// `Σ_i d(x_i, V)²`.
    pub total_error: f64,
}

/// `⌈(1−β)n⌉`, ignoring floating-point excess.
pub fn inlier_count(n: usize, beta: f64) -> usize {
    (ceil_tol((1.0 - beta) * n as f64).max(0.0) as usize).min(n)
}

/// Keeps the `⌈(1−β)n⌉` smallest squared residuals, ties to the smaller index.
pub fn trim_residuals(residuals_sq: &[f64], beta: f64) -> Result<InlierSet> {
    check_beta(beta)?;
    let n = residuals_sq.len();
    let keep = inlier_count(n, beta);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| residuals_sq[a].total_cmp(&residuals_sq[b]).then(a.cmp(&b)));
    let mut ids = order[..keep].to_vec();
    ids.sort_unstable();
    Ok(InlierSet {
        inlier_error: ids.iter().map(|&i| residuals_sq[i]).sum(),
        total_error: residuals_sq.iter().sum(),
        ids,
    })
}

pub fn nearest_inliers(points: &PointSet, basis: &OrthonormalBasis, beta: f64) -> Result<InlierSet> {
    let r: Vec<f64> = points
        .rows()
        .map(|x| basis.residual_distance(x).map(|d| d * d))
        .collect::<Result<_>>()?;
    trim_residuals(&r, beta)
}

/// [`nearest_inliers`] over a source, in one reporting pass.
pub fn nearest_inliers_pass(source: &mut DatasetSource, basis: &OrthonormalBasis, beta: f64) -> Result<InlierSet> {
    if basis.dim() != source.d() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            actual: source.d(),
        });
    }
    let mut r = Vec::with_capacity(source.n());
    source.report_pass("inlier error", |_, x| {
        let d = basis.residual_unchecked(x);
        r.push(d * d);
        Ok(())
    })?;
    trim_residuals(&r, beta)
}

/// Inlier share of the error with respect to `reference`: the error over
/// `inliers` (or over `N_β(reference)` when not given) divided by the total.
/// A zero total gives 1.
pub fn check_lambda(
    points: &PointSet,
    reference: &OrthonormalBasis,
    beta: f64,
    inliers: Option<&[usize]>,
) -> Result<f64> {
    let r: Vec<f64> = points
        .rows()
        .map(|x| reference.residual_distance(x).map(|d| d * d))
        .collect::<Result<_>>()?;
    let total: f64 = r.iter().sum();
    let inlier: f64 = match inliers {
        Some(ids) => {
            crate::linalg::SubsetIds(ids.to_vec()).check_range(points.n())?;
            ids.iter().map(|&i| r[i]).sum()
        }
        None => trim_residuals(&r, beta)?.inlier_error,
    };
    Ok(if total == 0.0 { 1.0 } else { inlier / total })
}

#[derive(Clone, Debug)]
pub struct RobustSelection {
    pub selection: SelectionResult,
    /// `N_β` of the selected span.
    pub inliers: InlierSet,
    pub warnings: Vec<String>,
}

/// The two-pass pipeline with parameters sized for `α/λ`, followed by an
/// inlier evaluation pass (logged as reporting). `observed_lambda`, when
/// known, is compared against the assumed `λ`; a violation is a warning.
pub fn robust_select(
    source: &mut DatasetSource,
    config: &SamplingConfig,
    outliers: &OutlierConfig,
    observed_lambda: Option<f64>,
) -> Result<RobustSelection> {
    OutlierConfig::new(outliers.beta, outliers.lambda)?;
    if config.p != 2.0 {
        return Err(Error::param("the outlier pipeline requires p = 2"));
    }
    let mut warnings = Vec::new();
    if let Some(obs) = observed_lambda {
        if obs < outliers.lambda {
            warnings.push(format!(
                "inlier error share {obs:.4} is below the assumed lambda {}; the guarantee does not apply",
                outliers.lambda
            ));
        }
    }
    let mut selection = pipeline::select_with_mode(
        source,
        config,
        ParamMode::L2Outlier {
            lambda: outliers.lambda,
        },
    )?;
    let basis = selection.rows.basis(source.d())?;
    let mark = source.report_log().len();
    let inliers = nearest_inliers_pass(source, &basis, outliers.beta)?;
    selection.report_log.extend(&source.report_log().since(mark));
    Ok(RobustSelection {
        selection,
        inliers,
        warnings,
    })
}
