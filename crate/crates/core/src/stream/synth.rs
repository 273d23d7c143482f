//! Planted low-rank instances with optional outliers.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, OrthonormalBasis, PointSet};
use crate::outliers::inlier_count;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n: usize,
    pub d: usize,
    pub rank: usize,
    /// Expected norm of each inlier's noise vector. The noise is isotropic,
    /// so its per-coordinate standard deviation is `noise_sigma / sqrt(d)`.
    pub noise_sigma: f64,
    pub outlier_frac: f64,
    /// Distance of every outlier from the planted subspace.
    pub outlier_scale: f64,
    pub seed: u64,
}

impl SynthParams {
    pub fn new(n: usize, d: usize, rank: usize, noise_sigma: f64, seed: u64) -> Self {
        SynthParams {
            n,
            d,
            rank,
            noise_sigma,
            outlier_frac: 0.0,
            outlier_scale: 0.0,
            seed,
        }
    }

    pub fn with_outliers(mut self, frac: f64, scale: f64) -> Self {
        self.outlier_frac = frac;
        self.outlier_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::param("n and d must be positive"));
        }
        if self.rank == 0 || self.rank > self.d {
            return Err(Error::param(format!(
                "rank must be in 1..={} (d), got {}",
                self.d, self.rank
            )));
        }
        if !(0.0..1.0).contains(&self.outlier_frac) {
            return Err(Error::param(format!(
                "outlier fraction must be in [0, 1), got {}",
                self.outlier_frac
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.outlier_scale >= 0.0) {
            return Err(Error::param("noise and outlier scales must be non-negative"));
        }
        Ok(())
    }
}

/// What the generator planted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub params: SynthParams,
    /// `rank` orthonormal rows.
    pub planted_basis: Vec<Vec<f64>>,
    /// Sorted.
    pub inlier_ids: Vec<usize>,
    /// Sorted.
    pub outlier_ids: Vec<usize>,
}

impl GroundTruth {
    pub fn basis(&self) -> OrthonormalBasis {
        OrthonormalBasis::from_rows(
            self.params.d,
            self.planted_basis.iter().map(|r| (0, r.as_slice())),
        )
        .expect("planted basis has dimension d")
    }
}

pub fn generate_synthetic(params: &SynthParams) -> Result<(PointSet, GroundTruth)> {
    params.validate()?;
    let SynthParams { n, d, rank, .. } = *params;
    let mut rng = seed::rng(params.seed, seed::SYNTH, 0);
    let gaussian = |rng: &mut seed::SeededRng, len: usize| -> Vec<f64> {
        (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
    };

    let mut planted = OrthonormalBasis::empty(d);
    while planted.rank() < rank {
        let g = gaussian(&mut rng, d);
        planted.push(planted.rank(), &g)?;
    }

    let n_out = n - inlier_count(n, params.outlier_frac);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut outlier_ids: Vec<usize> = order[..n_out].to_vec();
    outlier_ids.sort_unstable();
    let mut is_outlier = vec![false; n];
    outlier_ids.iter().for_each(|&i| is_outlier[i] = true);

    let noise_sd = params.noise_sigma / (d as f64).sqrt();
    let mut data = Vec::with_capacity(n * d);
    for &out in &is_outlier {
        let mut x = vec![0.0; d];
        if out {
            // keep drawing until the direction has a usable off-span part
            loop {
                let g = gaussian(&mut rng, d);
                let coords = planted.coordinates(&g);
                let mut off = g.clone();
                for (c, b) in coords.iter().zip(planted.vectors()) {
                    off.iter_mut().zip(b).for_each(|(o, bi)| *o -= c * bi);
                }
                let len = linalg::norm(&off);
                if len > 1e-8 || rank == d {
                    if len > 0.0 {
                        off.iter_mut()
                            .for_each(|o| *o *= params.outlier_scale / len);
                    }
                    x = off;
                    break;
                }
            }
        } else {
            let c = gaussian(&mut rng, rank);
            for (ci, b) in c.iter().zip(planted.vectors()) {
                x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += ci * bi);
            }
            let e = gaussian(&mut rng, d);
            x.iter_mut().zip(&e).for_each(|(xi, ei)| *xi += noise_sd * ei);
        }
        data.extend(x);
    }
    let inlier_ids = (0..n).filter(|&i| !is_outlier[i]).collect();
    let truth = GroundTruth {
        params: params.clone(),
        planted_basis: planted.vectors().map(|v| v.to_vec()).collect(),
        inlier_ids,
        outlier_ids,
    };
    Ok((PointSet::new(n, d, data)?, truth))
}
