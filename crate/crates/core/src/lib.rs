//! Subset selection for `ℓp` subspace approximation.
//!
//! Given `n` points in `d` dimensions, pick a small subset of the points
//! whose span contains a near-optimal `k`-dimensional subspace. The main
//! pipeline makes two passes over the data: one to draw a pivot subset `S0`
//! by volume sampling, and one to prefetch proposals for a set of
//! Metropolis-Hastings chains that imitate rounds of adaptive sampling.
//!
//! ```no_run
//! use ssel_core::{generate_synthetic, select, DatasetSource, ParamOverrides, SamplingConfig, SynthParams};
//!
//! let (points, _) = generate_synthetic(&SynthParams::new(2000, 50, 5, 0.1, 1)).unwrap();
//! let mut source = DatasetSource::in_memory(points);
//! let config = SamplingConfig::new(5, 0.5, 42).with_overrides(ParamOverrides::parse("m=200").unwrap());
//! let result = select(&mut source, &config).unwrap();
//! assert_eq!(result.pass_log.total_passes(), 2);
//! ```

pub mod error;
pub mod experiment;
pub mod linalg;
pub mod outliers;
pub mod report;
pub mod samplers;
pub mod seed;
pub mod stream;

pub use error::{Error, Result};
pub use experiment::{run_experiment, Algorithm, DatasetSpec, ExperimentOutcome, ExperimentSpec, Summary};
pub use linalg::{
    err_p, optimal_subspace, orthonormal_basis, residual_distance, simplex_volume_sq,
    OrthonormalBasis, PointSet, SubsetIds,
};
pub use outliers::{
    check_lambda, inlier_count, nearest_inliers, robust_select, InlierSet, OutlierConfig,
    RobustSelection,
};
pub use report::{parse_report, to_csv_string, ReportRow};
pub use samplers::{
    derive_params, mcmc_select, select, DerivedParams, InitMode, ParamMode, ParamOverrides,
    SamplingConfig, SelectedRows, SelectionResult,
};
pub use stream::{
    generate_synthetic, AccessMode, DatasetSource, FileFormat, GroundTruth, PassLog, SynthParams,
};
