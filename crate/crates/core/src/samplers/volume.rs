//! Volume sampling of `k`-subsets: exact enumeration, an exact spectral
//! sampler for `p = 2`, and the lazy swap walk.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, gram_determinant, OrthonormalBasis, PointSet, SubsetIds};
use crate::samplers::SelectedRows;
use crate::seed::{self, SeededRng};
use crate::stream::DatasetSource;

/// Largest `C(n, k)` that is enumerated.
pub const MAX_ENUMERATION: f64 = 1e6;

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn k_subsets(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut next = (k <= n).then(|| (0..k).collect::<Vec<usize>>());
    std::iter::from_fn(move || {
        let cur = next.take()?;
        let mut c = cur.clone();
        let mut i = k;
        while i > 0 {
            i -= 1;
            if c[i] < n - k + i {
                c[i] += 1;
                for j in i + 1..k {
                    c[j] = c[j - 1] + 1;
                }
                next = Some(c);
                break;
            }
        }
        Some(cur)
    })
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn volume_weight(rows: &[&[f64]], p: f64) -> f64 {
    let k = rows.len();
    let f = linalg::factorial(k);
    let v2 = gram_determinant(rows) / (f * f);
    if p == 2.0 {
        v2
    } else {
        v2.powf(p / 2.0)
    }
}

/// Enumerates every `k`-subset with its weight `vol(Δ_S)^p`.
pub struct ExactVolumeSampler {
    k: usize,
    subsets: Vec<usize>,
    cdf: Vec<f64>,
}

impl ExactVolumeSampler {
    pub fn new(points: &PointSet, k: usize, p: f64) -> Result<Self> {
        linalg::check_exponent(p)?;
        let n = points.n();
        if k == 0 || k > n {
            return Err(Error::param(format!("k must be in 1..={n}, got {k}")));
        }
        let size = binomial(n, k);
        if size > MAX_ENUMERATION {
            return Err(Error::EnumerationTooLarge {
                what: "k-subsets",
                size,
                limit: MAX_ENUMERATION,
            });
        }
        let mut subsets = Vec::with_capacity(size as usize * k);
        let mut cdf = Vec::with_capacity(size as usize);
        let mut acc = 0.0;
        let mut rows = Vec::with_capacity(k);
        for s in k_subsets(n, k) {
            rows.clear();
            rows.extend(s.iter().map(|&i| points.row(i)));
            acc += volume_weight(&rows, p);
            cdf.push(acc);
            subsets.extend_from_slice(&s);
        }
        if acc <= 0.0 {
            return Err(Error::RankDeficient { k });
        }
        Ok(ExactVolumeSampler { k, subsets, cdf })
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    /// `(subset, probability)` pairs in lexicographic order.
    pub fn distribution(&self) -> Vec<(SubsetIds, f64)> {
        let total = *self.cdf.last().expect("nonempty");
        let mut prev = 0.0;
        self.cdf
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let p = (c - prev) / total;
                prev = c;
                (SubsetIds(self.subset(i).to_vec()), p)
            })
            .collect()
    }

    fn subset(&self, i: usize) -> &[usize] {
        &self.subsets[i * self.k..(i + 1) * self.k]
    }

    pub fn sample(&self, rng: &mut SeededRng) -> SubsetIds {
        let total = *self.cdf.last().expect("nonempty");
        let u: f64 = rng.sample::<f64, _>(Open01) * total;
        let i = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        SubsetIds(self.subset(i).to_vec())
    }
}

/// Exact volume sampling for `p = 2` as a `k`-DPP with kernel `X Xᵀ`,
/// using the eigendecomposition of `XᵀX`.
pub struct SpectralVolumeSampler {
    k: usize,
    /// Eigenvalues of `XᵀX` above the rank tolerance, descending.
    values: Vec<f64>,
    /// `z[i][j] = x_j · v_i / sqrt(λ_i)`, the eigenvectors of `X Xᵀ`.
    z: Vec<Vec<f64>>,
    /// `esp[r][m]`: elementary symmetric polynomial of degree `r` in the
    /// first `m` normalized eigenvalues.
    esp: Vec<Vec<f64>>,
}

impl SpectralVolumeSampler {
    pub fn new(points: &PointSet, k: usize) -> Result<Self> {
        let (n, d) = (points.n(), points.d());
        if k == 0 || k > n {
            return Err(Error::param(format!("k must be in 1..={n}, got {k}")));
        }
        let eig = linalg::symmetric_eigen(&points.gram(), d);
        let top = eig.values.first().copied().unwrap_or(0.0);
        let keep: Vec<usize> = (0..d)
            .filter(|&i| top > 0.0 && eig.values[i] > 1e-12 * top)
            .collect();
        if keep.len() < k {
            return Err(Error::RankDeficient { k });
        }
        let values: Vec<f64> = keep.iter().map(|&i| eig.values[i]).collect();
        let z = keep
            .iter()
            .map(|&i| {
                let v = &eig.vectors[i * d..(i + 1) * d];
                let s = eig.values[i].sqrt();
                points.rows().map(|x| linalg::dot(x, v) / s).collect()
            })
            .collect();
        let lam: Vec<f64> = values.iter().map(|v| v / top).collect();
        let r = lam.len();
        let mut esp = vec![vec![0.0; r + 1]; k + 1];
        esp[0].iter_mut().for_each(|e| *e = 1.0);
        for deg in 1..=k {
            for m in 1..=r {
                esp[deg][m] = esp[deg][m - 1] + lam[m - 1] * esp[deg - 1][m - 1];
            }
        }
        Ok(SpectralVolumeSampler { k, values, z, esp })
    }

    pub fn sample(&self, rng: &mut SeededRng) -> SubsetIds {
        let top = self.values[0];
        // choose k eigenvectors
        let mut chosen = Vec::with_capacity(self.k);
        let mut rem = self.k;
        let mut m = self.values.len();
        while rem > 0 && m > 0 {
            let lam = self.values[m - 1] / top;
            let keep = if m == rem {
                1.0
            } else {
                lam * self.esp[rem - 1][m - 1] / self.esp[rem][m]
            };
            let u: f64 = rng.sample(Open01);
            if u < keep {
                chosen.push(m - 1);
                rem -= 1;
            }
            m -= 1;
        }
        // projection DPP on the chosen eigenvectors
        let mut cols: Vec<Vec<f64>> = chosen.iter().map(|&i| self.z[i].clone()).collect();
        orthonormalize(&mut cols);
        let n = self.z[0].len();
        let mut out = Vec::with_capacity(self.k);
        while !cols.is_empty() {
            let weights: Vec<f64> = (0..n)
                .map(|j| cols.iter().map(|c| c[j] * c[j]).sum())
                .collect();
            let total: f64 = weights.iter().sum();
            let mut u: f64 = rng.sample::<f64, _>(Open01) * total;
            let mut j = n - 1;
            for (i, &w) in weights.iter().enumerate() {
                if u < w {
                    j = i;
                    break;
                }
                u -= w;
            }
            out.push(j);
            let c = (0..cols.len())
                .max_by(|&a, &b| cols[a][j].abs().total_cmp(&cols[b][j].abs()))
                .expect("nonempty");
            let pivot = cols.swap_remove(c);
            for col in cols.iter_mut() {
                let f = col[j] / pivot[j];
                col.iter_mut().zip(&pivot).for_each(|(x, p)| *x -= f * p);
            }
            orthonormalize(&mut cols);
        }
        out.sort_unstable();
        SubsetIds(out)
    }
}

fn orthonormalize(cols: &mut [Vec<f64>]) {
    for i in 0..cols.len() {
        let (done, rest) = cols.split_at_mut(i);
        let v = &mut rest[0];
        for _ in 0..2 {
            for b in done.iter() {
                let c = linalg::dot(v, b);
                v.iter_mut().zip(b).for_each(|(x, bi)| *x -= c * bi);
            }
        }
        let nv = linalg::norm(v);
        if nv > 0.0 {
            v.iter_mut().for_each(|x| *x /= nv);
        }
    }
}

/// Exact distribution `vol(Δ_S)^p / Σ_T vol(Δ_T)^p` over all `k`-subsets.
pub fn volume_distribution(points: &PointSet, k: usize, p: f64) -> Result<Vec<(SubsetIds, f64)>> {
    Ok(ExactVolumeSampler::new(points, k, p)?.distribution())
}

/// One `k`-subset drawn with probability proportional to `vol(Δ_S)^p`.
/// Enumerates when `C(n, k) ≤ 10^6`; otherwise uses the spectral sampler,
/// which needs `p = 2`.
pub fn volume_sample_exact(points: &PointSet, k: usize, p: f64, seed: u64) -> Result<SubsetIds> {
    let mut rng = seed::rng(seed, seed::INIT, 0);
    match ExactVolumeSampler::new(points, k, p) {
        Ok(s) => Ok(s.sample(&mut rng)),
        Err(Error::EnumerationTooLarge { .. }) if p == 2.0 => {
            Ok(SpectralVolumeSampler::new(points, k)?.sample(&mut rng))
        }
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkStats {
    pub steps: u64,
    /// Non-lazy steps that proposed a swap to a subset not already current.
    pub proposed: u64,
    pub accepted: u64,
}

/// Greedy farthest-residual pick of `k` rows among `rows`.
fn greedy_start(rows: &[&[f64]], d: usize, k: usize) -> Result<Vec<usize>> {
    let mut basis = OrthonormalBasis::from_rows(d, std::iter::empty())?;
    let scale = rows.iter().map(|r| linalg::norm(r)).fold(0.0, f64::max);
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let best = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen.contains(i))
            .map(|(i, r)| (i, basis.residual_unchecked(r)))
            .fold(None, |best: Option<(usize, f64)>, (i, r)| match best {
                Some((_, br)) if br >= r => best,
                _ => Some((i, r)),
            });
        match best {
            Some((i, r)) if r > linalg::RANK_TOL * scale && basis.push(i, rows[i])? => {
                chosen.push(i)
            }
            _ => return Err(Error::NoFullRankStart { k }),
        }
    }
    Ok(chosen)
}

/// The lazy swap walk over positions into `rows`. `propose` returns the
/// index to swap in, or `None` to stay.
fn swap_walk<P>(
    rows: &[&[f64]],
    start: Vec<usize>,
    steps: usize,
    rng: &mut SeededRng,
    mut propose: P,
) -> (Vec<usize>, WalkStats)
where
    P: FnMut(&mut SeededRng, &[usize]) -> Option<usize>,
{
    let k = start.len();
    let mut cur = start;
    let mut cur_rows: Vec<&[f64]> = cur.iter().map(|&i| rows[i]).collect();
    let mut cur_det = gram_determinant(&cur_rows);
    let mut stats = WalkStats::default();
    let mut cand_rows = cur_rows.clone();
    for _ in 0..steps {
        stats.steps += 1;
        if rng.random::<bool>() {
            continue;
        }
        let pos = rng.random_range(0..k);
        let Some(j) = propose(rng, &cur) else { continue };
        if cur.contains(&j) {
            continue;
        }
        stats.proposed += 1;
        cand_rows.copy_from_slice(&cur_rows);
        cand_rows[pos] = rows[j];
        let det = gram_determinant(&cand_rows);
        let u: f64 = rng.sample(Open01);
        if det > u * cur_det {
            stats.accepted += 1;
            cur[pos] = j;
            cur_rows[pos] = rows[j];
            cur_det = det;
        }
    }
    (cur, stats)
}

/// The lazy walk over `k`-subsets of an in-memory point set, with the swap
/// target drawn uniformly from the complement of the current subset.
pub fn volume_walk(points: &PointSet, k: usize, walk_steps: usize, seed: u64) -> Result<(SubsetIds, WalkStats)> {
    let n = points.n();
    if k == 0 || k > n {
        return Err(Error::param(format!("k must be in 1..={n}, got {k}")));
    }
    let rows: Vec<&[f64]> = points.rows().collect();
    let start = greedy_start(&rows, points.d(), k)?;
    let mut rng = seed::rng(seed, seed::VOLUME_WALK, 0);
    let (mut s, stats) = swap_walk(&rows, start, walk_steps, &mut rng, |rng, cur| {
        if n == k {
            return None;
        }
        // the r-th index not in cur
        let mut r = rng.random_range(0..n - k);
        let mut sorted = cur.to_vec();
        sorted.sort_unstable();
        for &c in &sorted {
            if c <= r {
                r += 1;
            }
        }
        Some(r)
    });
    s.sort_unstable();
    Ok((SubsetIds(s), stats))
}

/// Approximate volume sampling (`p = 2`) by `walk_steps` steps of the lazy walk.
pub fn volume_sample_mcmc(points: &PointSet, k: usize, walk_steps: usize, seed: u64) -> Result<SubsetIds> {
    volume_walk(points, k, walk_steps, seed).map(|r| r.0)
}

fn buffer_rows(source: &mut DatasetSource, label: &str, keep: Option<&[bool]>) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut ids = Vec::new();
    let mut data = Vec::new();
    source.stream_pass(label, |i, x| {
        if keep.is_none_or(|k| k[i]) {
            ids.push(i);
            data.extend_from_slice(x);
        }
        Ok(())
    })?;
    Ok((ids, data))
}

/// Exact volume sampling in one pass that buffers the rows.
pub fn exact_volume_init(source: &mut DatasetSource, k: usize, p: f64, seed: u64) -> Result<SelectedRows> {
    let d = source.d();
    let (_, data) = buffer_rows(source, "volume sampling", None)?;
    let points = PointSet::new(source.n(), d, data)?;
    let s = volume_sample_exact(&points, k, p, seed)?;
    SelectedRows::from_points(&points, &s)
}

/// The lazy volume walk in one pass. The uniform swap targets are drawn
/// before the pass (`n` is known on open), the pass collects only those
/// rows, and the walk then runs in memory. A swap target already in the
/// current subset counts as a lazy step.
pub fn mcmc_volume_init(
    source: &mut DatasetSource,
    k: usize,
    walk_steps: usize,
    seed: u64,
) -> Result<(SelectedRows, WalkStats)> {
    let (n, d) = (source.n(), source.d());
    if k == 0 || k > n {
        return Err(Error::param(format!("k must be in 1..={n}, got {k}")));
    }
    let mut pre = seed::rng(seed, seed::WALK_PREFETCH, 0);
    let targets: Vec<usize> = (0..walk_steps).map(|_| pre.random_range(0..n)).collect();
    // the greedy start also needs a pool: a uniform sample of 4k + 32 rows
    let pool: Vec<usize> = (0..4 * k + 32).map(|_| pre.random_range(0..n)).collect();
    let mut keep = vec![false; n];
    targets.iter().chain(&pool).for_each(|&i| keep[i] = true);
    let (ids, data) = buffer_rows(source, "volume walk prefetch", Some(&keep))?;
    let mut local = vec![usize::MAX; n];
    ids.iter().enumerate().for_each(|(pos, &i)| local[i] = pos);
    let rows: Vec<&[f64]> = data.chunks_exact(d).collect();

    let mut pool_local: Vec<usize> = pool.iter().map(|&i| local[i]).collect();
    pool_local.sort_unstable();
    pool_local.dedup();
    let pool_rows: Vec<&[f64]> = pool_local.iter().map(|&i| rows[i]).collect();
    let start = match greedy_start(&pool_rows, d, k) {
        Ok(s) => s.into_iter().map(|i| pool_local[i]).collect(),
        // fall back to everything that was buffered
        Err(_) => greedy_start(&rows, d, k)?,
    };

    let mut rng = seed::rng(seed, seed::VOLUME_WALK, 0);
    let mut next = targets.iter();
    let (s, stats) = swap_walk(&rows, start, walk_steps, &mut rng, |_, _| {
        next.next().map(|&i| local[i])
    });
    let mut out = SelectedRows::new();
    for pos in s {
        out.push(ids[pos], rows[pos].into());
    }
    Ok((out, stats))
}
