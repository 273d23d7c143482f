//! Dense kernels: spans, residual distances, lp errors, simplex volumes and
//! the exact SVD optimum used to score selections.
//!
//! Matrices are stored row-major in flat `Vec<f64>`s. Everything here is a
//! pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance below which a candidate basis vector is treated as
/// linearly dependent.
pub const RANK_TOL: f64 = 1e-9;
/// Relative residuals below this are reported as zero.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// `n` points in `d` dimensions, one row per point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidPoints(format!(
                "need n >= 1 and d >= 1, got n={n}, d={d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::InvalidPoints(format!(
                "expected {} entries for {n}x{d}, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPoints(format!(
                "non-finite entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(PointSet { n, d, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let d = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::InvalidPoints(format!(
                    "row {i} has {} entries, expected {d}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), d, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copies the given rows, in order, into a new point set.
    pub fn select(&self, ids: &[usize]) -> Result<PointSet> {
        let mut data = Vec::with_capacity(ids.len() * self.d);
        for &i in ids {
            if i >= self.n {
                return Err(Error::param(format!("row id {i} out of range (n = {})", self.n)));
            }
            data.extend_from_slice(self.row(i));
        }
        PointSet::new(ids.len(), self.d, data)
    }

    /// `XᵀX`, a `d×d` row-major matrix.
    pub fn gram(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.d * self.d];
        for row in self.rows() {
            accumulate_outer(&mut g, row);
        }
        g
    }
}

/// Ordered indices into a point set. Repeats are allowed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsetIds(pub Vec<usize>);

impl SubsetIds {
    pub fn new(ids: Vec<usize>) -> Self {
        SubsetIds(ids)
    }

    pub fn empty() -> Self {
        SubsetIds(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn check_range(&self, n: usize) -> Result<()> {
        match self.0.iter().find(|&&i| i >= n) {
            Some(i) => Err(Error::param(format!("subset id {i} out of range (n = {n})"))),
            None => Ok(()),
        }
    }
}

impl From<Vec<usize>> for SubsetIds {
    fn from(v: Vec<usize>) -> Self {
        SubsetIds(v)
    }
}

/// Orthonormal rows spanning the linear span of a set of points.
#[derive(Clone, Debug)]
pub struct OrthonormalBasis {
    d: usize,
    vectors: Vec<f64>,
    source_ids: Vec<usize>,
    scale: f64,
}

impl OrthonormalBasis {
    pub fn empty(d: usize) -> Self {
        OrthonormalBasis {
            d,
            vectors: Vec::new(),
            source_ids: Vec::new(),
            scale: 0.0,
        }
    }

    /// Builds a basis from `(id, row)` pairs with modified Gram-Schmidt.
    /// The rank tolerance is relative to the largest row norm among them.
    pub fn from_rows<'a, I>(d: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, &'a [f64])>,
        I::IntoIter: Clone,
    {
        let rows = rows.into_iter();
        let mut basis = Self::empty(d);
        for (_, r) in rows.clone() {
            check_dim(d, r)?;
            basis.scale = basis.scale.max(norm(r));
        }
        for (id, r) in rows {
            basis.push(id, r)?;
        }
        Ok(basis)
    }

    /// Adds one point. Returns whether the rank grew.
    ///
    /// The rank tolerance is `RANK_TOL` times the largest row norm pushed so
    /// far (or supplied up front by [`from_rows`](Self::from_rows)).
    pub fn push(&mut self, id: usize, row: &[f64]) -> Result<bool> {
        check_dim(self.d, row)?;
        self.source_ids.push(id);
        self.scale = self.scale.max(norm(row));
        if self.rank() == self.d {
            return Ok(false);
        }
        let mut v = row.to_vec();
        // two rounds of MGS; the second one cleans up cancellation
        for _ in 0..2 {
            for b in self.vectors.chunks_exact(self.d) {
                let c = dot(&v, b);
                axpy(-c, b, &mut v);
            }
        }
        let nv = norm(&v);
        if nv <= RANK_TOL * self.scale || nv == 0.0 {
            return Ok(false);
        }
        v.iter_mut().for_each(|x| *x /= nv);
        self.vectors.extend_from_slice(&v);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rank(&self) -> usize {
        self.vectors.len() / self.d
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.d..(i + 1) * self.d]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.vectors.chunks_exact(self.d)
    }

    pub fn source_ids(&self) -> &[usize] {
        &self.source_ids
    }

    /// Coordinates of `x` in this basis.
    pub fn coordinates(&self, x: &[f64]) -> Vec<f64> {
        self.vectors().map(|b| dot(x, b)).collect()
    }

    /// `‖x − proj(x)‖₂`.
    pub fn residual_distance(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.d, x)?;
        Ok(self.residual_unchecked(x))
    }

    pub(crate) fn residual_unchecked(&self, x: &[f64]) -> f64 {
        let nx = norm(x);
        if self.rank() == 0 {
            return nx;
        }
        if self.rank() == self.d {
            return 0.0;
        }
        let mut v = x.to_vec();
        for b in self.vectors.chunks_exact(self.d) {
            let c = dot(&v, b);
            axpy(-c, b, &mut v);
        }
        let r = norm(&v);
        // rounding residue of a point inside the span
        if r <= RESIDUAL_TOL * nx {
            0.0
        } else {
            r.min(nx)
        }
    }
}

/// Basis of the span of `points[subset]`. Empty subsets give rank 0.
pub fn orthonormal_basis(points: &PointSet, subset: &SubsetIds) -> Result<OrthonormalBasis> {
    subset.check_range(points.n())?;
    OrthonormalBasis::from_rows(
        points.d(),
        subset.as_slice().iter().map(|&i| (i, points.row(i))),
    )
}

pub fn residual_distance(x: &[f64], basis: &OrthonormalBasis) -> Result<f64> {
    basis.residual_distance(x)
}

/// `Σᵢ d(xᵢ, span)^p`.
pub fn err_p(points: &PointSet, basis: &OrthonormalBasis, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if basis.dim() != points.d() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            actual: points.d(),
        });
    }
    Ok(points
        .rows()
        .map(|x| pow_p(basis.residual_unchecked(x), p))
        .sum())
}

/// `r^p`, with the common exponents done without `powf`.
#[inline]
pub fn pow_p(r: f64, p: f64) -> f64 {
    if p == 2.0 {
        r * r
    } else if p == 1.0 {
        r
    } else {
        r.powf(p)
    }
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::param(format!("exponent p must be finite and >= 1, got {p}")));
    }
    Ok(())
}

/// Squared volume of the simplex spanned by the subset and the origin,
/// `det(G) / (k!)²` with `G` the Gram matrix of the subset.
pub fn simplex_volume_sq(points: &PointSet, subset: &SubsetIds) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::param("simplex volume needs at least one point"));
    }
    subset.check_range(points.n())?;
    let rows: Vec<&[f64]> = subset.as_slice().iter().map(|&i| points.row(i)).collect();
    let k = rows.len();
    let f = factorial(k);
    Ok(gram_determinant(&rows) / (f * f))
}

/// Determinant of the Gram matrix of `rows`, clamped to zero for
/// numerically dependent rows.
pub fn gram_determinant(rows: &[&[f64]]) -> f64 {
    let k = rows.len();
    let mut g = vec![0.0; k * k];
    for i in 0..k {
        for j in i..k {
            let v = dot(rows[i], rows[j]);
            g[i * k + j] = v;
            g[j * k + i] = v;
        }
    }
    gram_matrix_determinant(&mut g, k)
}

/// Determinant of a PSD `k×k` matrix (overwritten). Values below `1e-12`
/// of the Hadamard bound are reported as exactly zero.
pub fn gram_matrix_determinant(g: &mut [f64], k: usize) -> f64 {
    let hadamard: f64 = (0..k).map(|i| g[i * k + i].max(0.0)).product();
    if hadamard == 0.0 {
        return 0.0;
    }
    let det = lu_determinant(g, k);
    if det <= 1e-12 * hadamard {
        0.0
    } else {
        det
    }
}

fn lu_determinant(a: &mut [f64], k: usize) -> f64 {
    let mut det = 1.0;
    for c in 0..k {
        let pivot = (c..k)
            .max_by(|&i, &j| a[i * k + c].abs().total_cmp(&a[j * k + c].abs()))
            .unwrap();
        if a[pivot * k + c] == 0.0 {
            return 0.0;
        }
        if pivot != c {
            for j in 0..k {
                a.swap(pivot * k + j, c * k + j);
            }
            det = -det;
        }
        let p = a[c * k + c];
        det *= p;
        for i in c + 1..k {
            let f = a[i * k + c] / p;
            if f != 0.0 {
                for j in c..k {
                    a[i * k + j] -= f * a[c * k + j];
                }
            }
        }
    }
    det
}

/// Best rank-`k` subspace for `p = 2` and its error `Σ_{i>k} σᵢ²`.
pub fn optimal_subspace(points: &PointSet, k: usize, p: f64) -> Result<(OrthonormalBasis, f64)> {
    if p != 2.0 {
        return Err(Error::param(format!(
            "the exact optimum is only available for p = 2, got p = {p}"
        )));
    }
    if k == 0 || k > points.d() {
        return Err(Error::param(format!(
            "k must be in 1..={}, got {k}",
            points.d()
        )));
    }
    let svd = right_singular_vectors(points);
    let mut basis = OrthonormalBasis::empty(points.d());
    basis.scale = 1.0;
    for v in svd.vectors.chunks_exact(points.d()).take(k) {
        basis.vectors.extend_from_slice(v);
    }
    let err = svd.values.iter().skip(k).map(|s| s * s).sum();
    Ok((basis, err))
}

/// Singular values (descending) and right singular vectors (as rows).
#[derive(Clone, Debug)]
pub struct RightSvd {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

/// One-sided Jacobi SVD on the columns of `X`.
pub fn right_singular_vectors(points: &PointSet) -> RightSvd {
    let (n, d) = (points.n(), points.d());
    // column-major copy of X so that column rotations are contiguous
    let mut cols = vec![0.0; n * d];
    for (i, row) in points.rows().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            cols[j * n + i] = v;
        }
    }
    let mut v = identity(d);
    for _sweep in 0..60 {
        let mut rotated = false;
        for a in 0..d {
            for b in a + 1..d {
                let (ca, cb) = split_cols(&mut cols, n, a, b);
                let alpha = dot(ca, ca);
                let beta = dot(cb, cb);
                let gamma = dot(ca, cb);
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(ca, cb, c, s);
                for r in 0..d {
                    let (x, y) = (v[r * d + a], v[r * d + b]);
                    v[r * d + a] = c * x - s * y;
                    v[r * d + b] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> = (0..d)
        .map(|j| (norm(&cols[j * n..(j + 1) * n]), j))
        .collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut vectors = Vec::with_capacity(d * d);
    for &(_, j) in &order {
        vectors.extend((0..d).map(|r| v[r * d + j]));
    }
    RightSvd {
        values: order.iter().map(|o| o.0).collect(),
        vectors,
    }
}

fn split_cols(cols: &mut [f64], n: usize, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a < b);
    let (lo, hi) = cols.split_at_mut(b * n);
    (&mut lo[a * n..(a + 1) * n], &mut hi[..n])
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    /// Descending.
    pub values: Vec<f64>,
    /// Eigenvectors as rows, matching `values`.
    pub vectors: Vec<f64>,
}

pub fn symmetric_eigen(matrix: &[f64], n: usize) -> SymmetricEigen {
    assert_eq!(matrix.len(), n * n);
    let m = nalgebra::DMatrix::from_row_slice(n, n, matrix);
    // symmetrize so that rounding in the input cannot bias the solver
    let m = (&m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<(f64, usize)> = eig.eigenvalues.iter().copied().zip(0..n).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut vectors = Vec::with_capacity(n * n);
    for &(_, j) in &order {
        vectors.extend(eig.eigenvectors.column(j).iter());
    }
    SymmetricEigen {
        values: order.iter().map(|o| o.0).collect(),
        vectors,
    }
}

/// `err₂` of the best rank-`k` subspace, from the Gram matrix `XᵀX`.
pub fn optimal_error_from_gram(gram: &[f64], d: usize, k: usize) -> f64 {
    let eig = symmetric_eigen(gram, d);
    eig.values.iter().skip(k).map(|v| v.max(0.0)).sum()
}

/// `err₂` of the best rank-`k` subspace contained in `span(basis)`, from the
/// Gram matrix `XᵀX`.
pub fn best_rank_k_error_in_span(gram: &[f64], basis: &OrthonormalBasis, k: usize) -> f64 {
    best_rank_k_subspace_in_span(gram, basis, k).1
}

/// The best rank-`k` subspace contained in `span(basis)` and its `err₂`,
/// from the Gram matrix `XᵀX`. If the span has rank at most `k` it is
/// returned whole.
pub fn best_rank_k_subspace_in_span(
    gram: &[f64],
    basis: &OrthonormalBasis,
    k: usize,
) -> (OrthonormalBasis, f64) {
    let d = basis.dim();
    let r = basis.rank();
    let trace: f64 = (0..d).map(|i| gram[i * d + i]).sum();
    if r == 0 {
        return (basis.clone(), trace);
    }
    // B G Bᵀ
    let gb: Vec<Vec<f64>> = basis
        .vectors()
        .map(|b| (0..d).map(|i| dot(&gram[i * d..(i + 1) * d], b)).collect())
        .collect();
    let mut m = vec![0.0; r * r];
    for (i, bi) in basis.vectors().enumerate() {
        for j in 0..r {
            m[i * r + j] = dot(bi, &gb[j]);
        }
    }
    for i in 0..r {
        for j in i + 1..r {
            let s = 0.5 * (m[i * r + j] + m[j * r + i]);
            m[i * r + j] = s;
            m[j * r + i] = s;
        }
    }
    let eig = symmetric_eigen(&m, r);
    let captured: f64 = eig.values.iter().take(k).map(|v| v.max(0.0)).sum();
    let err = (trace - captured).max(0.0);
    if r <= k {
        return (basis.clone(), err);
    }
    let mut out = OrthonormalBasis::empty(d);
    out.scale = 1.0;
    for e in eig.vectors.chunks_exact(r).take(k) {
        let mut u = vec![0.0; d];
        for (c, b) in e.iter().zip(basis.vectors()) {
            axpy(*c, b, &mut u);
        }
        let nu = norm(&u);
        u.iter_mut().for_each(|x| *x /= nu);
        out.vectors.extend_from_slice(&u);
    }
    out.source_ids = basis.source_ids.clone();
    (out, err)
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn accumulate_outer(g: &mut [f64], row: &[f64]) {
    let d = row.len();
    for i in 0..d {
        let xi = row[i];
        if xi == 0.0 {
            continue;
        }
        let gi = &mut g[i * d..(i + 1) * d];
        for (gij, xj) in gi.iter_mut().zip(row) {
            *gij += xi * xj;
        }
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn check_dim(d: usize, x: &[f64]) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(rows: &[&[f64]]) -> PointSet {
        PointSet::from_rows(rows).unwrap()
    }

    fn ids(v: &[usize]) -> SubsetIds {
        SubsetIds(v.to_vec())
    }

    #[test]
    fn rejects_bad_point_sets() {
        assert!(PointSet::new(0, 2, vec![]).is_err());
        assert!(PointSet::new(1, 2, vec![1.0]).is_err());
        assert!(PointSet::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(PointSet::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn basis_examples() {
        let x = pts(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = orthonormal_basis(&x, &ids(&[0])).unwrap();
        assert_eq!(b.rank(), 1);
        assert_eq!(b.vector(0), &[1.0, 0.0]);

        let b = orthonormal_basis(&x, &ids(&[])).unwrap();
        assert_eq!(b.rank(), 0);

        let col = pts(&[&[1.0, 0.0], &[2.0, 0.0]]);
        let b = orthonormal_basis(&col, &ids(&[0, 1])).unwrap();
        assert_eq!(b.rank(), 1);
        assert_eq!(b.source_ids(), &[0, 1]);
    }

    #[test]
    fn residual_examples() {
        let x = pts(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let b = orthonormal_basis(&x, &ids(&[0])).unwrap();
        assert_eq!(b.residual_distance(&[3.0, 4.0]).unwrap(), 4.0);
        assert!(b.residual_distance(&[2.5, 0.0]).unwrap() < 1e-9);
        let empty = OrthonormalBasis::empty(2);
        assert_eq!(empty.residual_distance(&[3.0, 4.0]).unwrap(), 5.0);
        assert!(matches!(
            b.residual_distance(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn err_p_examples() {
        let x = pts(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let b = orthonormal_basis(&x, &ids(&[0])).unwrap();
        assert!((err_p(&x, &b, 2.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((err_p(&x, &b, 3.0).unwrap() - 2.0).abs() < 1e-12);
        let full = orthonormal_basis(&x, &ids(&[0, 1])).unwrap();
        assert_eq!(err_p(&x, &full, 2.0).unwrap(), 0.0);
        assert!(err_p(&x, &b, 0.5).is_err());
    }

    #[test]
    fn simplex_volume_examples() {
        let x = pts(&[&[1.0, 0.0], &[0.0, 1.0], &[2.0, 0.0], &[0.0, 2.0]]);
        assert!((simplex_volume_sq(&x, &ids(&[0, 1])).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(simplex_volume_sq(&x, &ids(&[0, 2])).unwrap(), 0.0);
        // det(diag(4, 4)) / (2!)^2
        assert!((simplex_volume_sq(&x, &ids(&[2, 3])).unwrap() - 4.0).abs() < 1e-12);
        let dup = pts(&[&[0.3, 0.7, 0.1], &[0.3, 0.7, 0.1]]);
        assert_eq!(simplex_volume_sq(&dup, &ids(&[0, 1])).unwrap(), 0.0);
    }

    #[test]
    fn optimal_subspace_examples() {
        let x = pts(&[&[2.0, 0.0], &[0.0, 1.0]]);
        let (b, e) = optimal_subspace(&x, 1, 2.0).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
        assert!((b.vector(0)[0].abs() - 1.0).abs() < 1e-12);

        let id = pts(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let (_, e) = optimal_subspace(&id, 1, 2.0).unwrap();
        assert!((e - 1.0).abs() < 1e-12);

        assert!(optimal_subspace(&x, 1, 3.0).is_err());
        assert!(optimal_subspace(&x, 3, 2.0).is_err());
    }

    #[test]
    fn symmetric_eigen_diagonalizes() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0];
        let e = symmetric_eigen(&a, 3);
        for i in 0..3 {
            let v = &e.vectors[i * 3..i * 3 + 3];
            for r in 0..3 {
                let av: f64 = (0..3).map(|c| a[r * 3 + c] * v[c]).sum();
                assert!((av - e.values[i] * v[r]).abs() < 1e-12);
            }
        }
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    fn arb_points(max_n: usize, d: usize) -> impl Strategy<Value = PointSet> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, d), 1..=max_n)
            .prop_map(|rows| PointSet::from_rows(&rows).unwrap())
    }

    proptest! {
        #[test]
        fn basis_rows_are_orthonormal(x in arb_points(6, 4)) {
            let all = SubsetIds((0..x.n()).collect());
            let b = orthonormal_basis(&x, &all).unwrap();
            for i in 0..b.rank() {
                for j in 0..b.rank() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot(b.vector(i), b.vector(j)) - want).abs() < 1e-9);
                }
            }
            prop_assert!(b.rank() <= x.n());
        }

        #[test]
        fn pythagoras_and_contraction(x in arb_points(5, 4), y in prop::collection::vec(-3.0f64..3.0, 4)) {
            let b = orthonormal_basis(&x, &SubsetIds((0..x.n()).collect())).unwrap();
            let r = b.residual_distance(&y).unwrap();
            let proj: f64 = b.coordinates(&y).iter().map(|c| c * c).sum();
            let ny = dot(&y, &y);
            prop_assert!(r <= ny.sqrt() + 1e-12);
            prop_assert!((proj + r * r - ny).abs() <= 1e-9 * ny.max(1.0));
        }

        #[test]
        fn err_is_monotone_in_subset(x in arb_points(7, 3), cut in 0usize..7, p in 1.0f64..4.0) {
            let cut = cut.min(x.n());
            let small = SubsetIds((0..cut).collect());
            let big = SubsetIds((0..x.n()).collect());
            let e_small = err_p(&x, &orthonormal_basis(&x, &small).unwrap(), p).unwrap();
            let e_big = err_p(&x, &orthonormal_basis(&x, &big).unwrap(), p).unwrap();
            prop_assert!(e_big <= e_small * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn volume_permutation_and_scaling(x in arb_points(3, 4), c in -3.0f64..3.0) {
            prop_assume!(x.n() >= 2);
            let fwd = SubsetIds((0..x.n()).collect());
            let rev = SubsetIds((0..x.n()).rev().collect());
            let v1 = simplex_volume_sq(&x, &fwd).unwrap();
            let v2 = simplex_volume_sq(&x, &rev).unwrap();
            prop_assert!((v1 - v2).abs() <= 1e-9 * v1.max(1e-12));
            let mut rows: Vec<Vec<f64>> = x.rows().map(|r| r.to_vec()).collect();
            rows[0].iter_mut().for_each(|v| *v *= c);
            let scaled = PointSet::from_rows(&rows).unwrap();
            let v3 = simplex_volume_sq(&scaled, &fwd).unwrap();
            // the dependence clamp may zero one side when c is tiny
            if v3 > 0.0 {
                prop_assert!((v3 - c * c * v1).abs() <= 1e-8 * v3.max(c * c * v1));
            }
        }
    }

    #[test]
    fn optimum_beats_every_k_subset() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let rows: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let x = PointSet::from_rows(&rows).unwrap();
            for k in 1..=3 {
                let (_, opt) = optimal_subspace(&x, k, 2.0).unwrap();
                for s in crate::samplers::volume::k_subsets(8, k) {
                    let b = orthonormal_basis(&x, &SubsetIds(s)).unwrap();
                    assert!(opt <= err_p(&x, &b, 2.0).unwrap() * (1.0 + 1e-9));
                }
            }
        }
    }

    #[test]
    fn gram_route_matches_svd_route() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let x = PointSet::from_rows(&rows).unwrap();
        for k in 1..=5 {
            let (b, e) = optimal_subspace(&x, k, 2.0).unwrap();
            let g = x.gram();
            let e2 = optimal_error_from_gram(&g, 6, k);
            assert!((e - e2).abs() < 1e-9 * e);
            let e3 = err_p(&x, &b, 2.0).unwrap();
            assert!((e - e3).abs() < 1e-9 * e);
            // the optimum is its own best rank-k subspace
            assert!((best_rank_k_error_in_span(&g, &b, k) - e).abs() < 1e-9 * e);
        }
    }
}
