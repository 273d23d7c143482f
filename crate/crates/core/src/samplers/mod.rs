//! Squared-length, adaptive and volume sampling, the one-pass MCMC
//! selection, and the pipelines and diagnostics built on them.

use std::sync::Arc;

use crate::error::Result;
use crate::linalg::{OrthonormalBasis, PointSet, SubsetIds};
use crate::stream::PassLog;

pub mod adaptive;
pub mod diag;
pub mod mcmc;
pub mod params;
pub mod pipeline;
pub mod volume;

pub use adaptive::{
    adaptive_probabilities, adaptive_sample, adaptive_sample_round, adaptive_volume_init,
    squared_length_sample,
};
pub use diag::{exact_chain_distribution, tv_distance, tv_distance_diag, TvDiagnostic};
pub use mcmc::{mcmc_select, mcmc_select_with, mh_accept, proposal_q, ChainState, ChainStats, ProposalPrefetch};
pub use params::{
    default_walk_steps, derive_params, walk_length, DerivedParams, InitMode, ParamMode,
    ParamOverrides, SamplingConfig,
};
pub use pipeline::{evaluate_error, expected_passes, select, select_with_mode};
pub use volume::{
    exact_volume_init, mcmc_volume_init, volume_distribution, volume_sample_exact,
    volume_sample_mcmc, volume_walk, ExactVolumeSampler, SpectralVolumeSampler, WalkStats,
};

/// Selected points together with their coordinates, so that spans can be
/// formed without going back to the source.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelectedRows {
    ids: Vec<usize>,
    rows: Vec<Arc<[f64]>>,
}

impl SelectedRows {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: &PointSet, ids: &SubsetIds) -> Result<Self> {
        ids.check_range(points.n())?;
        Ok(SelectedRows {
            ids: ids.0.clone(),
            rows: ids.0.iter().map(|&i| points.row(i).into()).collect(),
        })
    }

    pub fn push(&mut self, id: usize, row: Arc<[f64]>) {
        self.ids.push(id);
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: &SelectedRows) {
        self.ids.extend_from_slice(&other.ids);
        self.rows.extend(other.rows.iter().cloned());
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> SubsetIds {
        SubsetIds(self.ids.clone())
    }

    pub fn id_slice(&self) -> &[usize] {
        &self.ids
    }

    pub fn rows(&self) -> &[Arc<[f64]>] {
        &self.rows
    }

    pub fn basis(&self, d: usize) -> Result<OrthonormalBasis> {
        OrthonormalBasis::from_rows(d, self.ids.iter().copied().zip(self.rows.iter().map(|r| &r[..])))
    }
}

/// Output of a selection run.
#[derive(Clone, Debug)]
pub struct SelectionResult {
    pub s0: SubsetIds,
    /// `A_1 .. A_l`.
    pub blocks: Vec<SubsetIds>,
    /// `S0` followed by the blocks, with coordinates.
    pub rows: SelectedRows,
    /// `err_p(X, span(S0 ∪ A_1 ∪ .. ∪ A_l))`.
    pub error: f64,
    /// `err_p(X, span(S0))`, when the run computed it.
    pub s0_error: Option<f64>,
    pub pass_log: PassLog,
    /// Evaluation scans, not part of the algorithm's pass count.
    pub report_log: PassLog,
    pub chains: Vec<ChainStats>,
    pub params: Option<DerivedParams>,
    /// Rounds that actually ran (adaptive runs stop at an exact fit).
    pub rounds_completed: usize,
    /// Passes spent choosing `S0`.
    pub init_passes: usize,
    pub walk: Option<WalkStats>,
}

impl SelectionResult {
    pub fn selected(&self) -> SubsetIds {
        self.rows.ids()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn acceptance_rate(&self) -> Option<f64> {
        let (p, a) = self
            .chains
            .iter()
            .fold((0u64, 0u64), |(p, a), c| (p + c.proposed, a + c.accepted));
        let (p, a) = match &self.walk {
            Some(w) if self.chains.is_empty() => (w.proposed, w.accepted),
            _ => (p, a),
        };
        (p > 0).then(|| a as f64 / p as f64)
    }
}
