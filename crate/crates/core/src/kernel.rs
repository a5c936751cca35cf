//! Gaussian set kernels.
//!
//! A set of vectors `X` is mapped to the function `F(X, σ) = Σ_{v∈X} k_σ(v, ·)`
//! in the RKHS of the Gaussian kernel `k_σ(u, v) = exp(-‖u - v‖² / 2σ²)`. By
//! the reproducing property the inner product of two such functions is the
//! double sum `Σ_{v∈X} Σ_{u∈Y} k_σ(v, u)`, which is what [`set_kernel`]
//! evaluates; the functions themselves are only ever materialized on a grid
//! ([`mean_map_grid`]). Several scales are combined with non-negative weights
//! into [`multiscale_kernel`].

use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::conv::EmbeddingSet;
use crate::error::{Error, Result};

/// Smallest admissible kernel scale. Projection clamps `σ` here instead of 0,
/// where the Gaussian is undefined.
pub const SIGMA_MIN: f64 = 1e-4;

/// Kernel scales `σ_l` and their non-negative combination weights `β_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    sigmas: Vec<f64>,
    betas: Vec<f64>,
}

impl ScaleParams {
    pub fn new(sigmas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::Empty("scale set"));
        }
        if sigmas.len() != betas.len() {
            return Err(Error::dims("kernel weights", sigmas.len(), betas.len()));
        }
        if let Some(s) = sigmas.iter().find(|&&s| !(s >= SIGMA_MIN)) {
            return Err(Error::InvalidParameter(format!("sigma {s} below {SIGMA_MIN}")));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b >= 0.0)) {
            return Err(Error::InvalidParameter(format!("negative kernel weight {b}")));
        }
        Ok(Self { sigmas, betas })
    }

    /// Scales halving from 1 (`1, 0.5, 0.25, …`) with unit weights.
    pub fn halving(count: usize) -> Result<Self> {
        let sigmas = (0..count).map(|l| 0.5f64.powi(l as i32)).collect();
        Self::new(sigmas, vec![1.0; count])
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub(crate) fn sigmas_mut(&mut self) -> &mut [f64] {
        &mut self.sigmas
    }

    pub(crate) fn betas_mut(&mut self) -> &mut [f64] {
        &mut self.betas
    }

    pub(crate) fn both_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.sigmas, &mut self.betas)
    }

    /// True when every σ is at least [`SIGMA_MIN`] and every β is non-negative.
    pub fn is_feasible(&self) -> bool {
        self.sigmas.iter().all(|&s| s >= SIGMA_MIN) && self.betas.iter().all(|&b| b >= 0.0)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= SIGMA_MIN {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("sigma {sigma} below {SIGMA_MIN}")))
    }
}

/// Four independent partial sums so the loop vectorizes.
fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (u4, v4) = (u.chunks_exact(4), v.chunks_exact(4));
    let tail: f64 = u4.remainder().iter().zip(v4.remainder()).map(|(a, b)| (a - b) * (a - b)).sum();
    for (a, b) in u4.zip(v4) {
        for k in 0..4 {
            let d = a[k] - b[k];
            acc[k] += d * d;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Gaussian RBF kernel `exp(-‖u - v‖² / 2σ²)`.
pub fn gaussian(u: &[f64], v: &[f64], sigma: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::dims("gaussian arguments", u.len(), v.len()));
    }
    check_sigma(sigma)?;
    Ok((-squared_distance(u, v) / (2.0 * sigma * sigma)).exp())
}

fn check_pair(x: &EmbeddingSet, y: &EmbeddingSet) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("embedding set"));
    }
    if x.dim() != y.dim() {
        return Err(Error::dims("embedding dimension", x.dim(), y.dim()));
    }
    Ok(())
}

/// `-1 / 2σ²` per scale.
fn exponent_factors(sigmas: &[f64]) -> Vec<f64> {
    sigmas.iter().map(|s| -0.5 / (s * s)).collect()
}

/// Adds the set kernel at every scale to `out`, sharing the pairwise
/// distances across scales.
fn accumulate_set_kernels(x: &EmbeddingSet, y: &EmbeddingSet, factors: &[f64], out: &mut [f64]) {
    for a in x.rows() {
        for b in y.rows() {
            let d2 = squared_distance(a, b);
            for (acc, f) in out.iter_mut().zip(factors) {
                *acc += (d2 * f).exp();
            }
        }
    }
}

/// Set kernel at each scale of `sigmas`.
pub fn set_kernels(x: &EmbeddingSet, y: &EmbeddingSet, sigmas: &[f64]) -> Result<Vec<f64>> {
    check_pair(x, y)?;
    for &s in sigmas {
        check_sigma(s)?;
    }
    let mut out = vec![0.0; sigmas.len()];
    accumulate_set_kernels(x, y, &exponent_factors(sigmas), &mut out);
    Ok(out)
}

/// Inner product of the mean maps of `x` and `y`: the sum of Gaussian
/// evaluations over all cross pairs.
pub fn set_kernel(x: &EmbeddingSet, y: &EmbeddingSet, sigma: f64) -> Result<f64> {
    Ok(set_kernels(x, y, &[sigma])?[0])
}

/// `Σ_l β_l · set_kernel(x, y, σ_l)`.
pub fn multiscale_kernel(x: &EmbeddingSet, y: &EmbeddingSet, scales: &ScaleParams) -> Result<f64> {
    let per_scale = set_kernels(x, y, scales.sigmas())?;
    Ok(combine(&per_scale, scales.betas()))
}

fn combine(per_scale: &[f64], betas: &[f64]) -> f64 {
    per_scale.iter().zip(betas).map(|(k, b)| k * b).sum()
}

/// Symmetric matrix of multi-scale kernel values over a list of sets,
/// together with the single-scale matrices it combines.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Array2<f64>,
    per_scale: Vec<Array2<f64>>,
}

impl GramMatrix {
    /// Wraps precomputed values (no per-scale breakdown).
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::dims("gram matrix columns", values.nrows(), values.ncols()));
        }
        Ok(Self {
            values,
            per_scale: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Single-scale set-kernel matrices, one per scale; empty for matrices
    /// built by [`GramMatrix::from_values`].
    pub fn per_scale(&self) -> &[Array2<f64>] {
        &self.per_scale
    }

    pub fn max_diagonal(&self) -> f64 {
        self.values.diag().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_dims(sets: &[&EmbeddingSet]) -> Result<usize> {
    let m = sets.first().map_or(0, |s| s.dim());
    for s in sets {
        if s.is_empty() {
            return Err(Error::Empty("embedding set"));
        }
        if s.dim() != m {
            return Err(Error::dims("embedding dimension", m, s.dim()));
        }
    }
    Ok(m)
}

/// Distinct embedding vectors across a list of sets.
///
/// Vertices with the same labelled neighbourhood get bitwise identical
/// embeddings, so real datasets have far fewer distinct rows than vertices.
/// Kernel tables are then evaluated once per distinct pair and weighted by
/// multiplicity.
struct VertexPool {
    /// Distinct rows, `dim` values each.
    rows: Vec<f64>,
    dim: usize,
    /// Per set, the pool index of each vertex.
    ids: Vec<Vec<usize>>,
    /// Per set, `(pool index, multiplicity)` in order of first occurrence.
    members: Vec<Vec<(usize, f64)>>,
}

/// Above this many distinct rows the tables get too large and the kernels
/// are evaluated pair by pair instead.
const POOL_LIMIT: usize = 4096;

impl VertexPool {
    fn build(sets: &[&EmbeddingSet]) -> Self {
        let dim = sets.first().map_or(0, |s| s.dim());
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut ids = Vec::with_capacity(sets.len());
        let mut members = Vec::with_capacity(sets.len());
        for set in sets {
            let mut set_ids = Vec::with_capacity(set.len());
            let mut set_members: Vec<(usize, f64)> = Vec::new();
            for row in set.rows() {
                let key: Vec<u64> = row.iter().map(|x| x.to_bits()).collect();
                let id = *index.entry(key).or_insert_with(|| {
                    rows.extend_from_slice(row);
                    rows.len() / dim.max(1) - 1
                });
                set_ids.push(id);
                match set_members.iter_mut().find(|(u, _)| *u == id) {
                    Some((_, c)) => *c += 1.0,
                    None => set_members.push((id, 1.0)),
                }
            }
            ids.push(set_ids);
            members.push(set_members);
        }
        Self { rows, dim, ids, members }
    }

    fn len(&self) -> usize {
        self.rows.len() / self.dim.max(1)
    }

    fn row(&self, u: usize) -> &[f64] {
        &self.rows[u * self.dim..(u + 1) * self.dim]
    }

    /// Squared distances from each distinct row of `self` to each of
    /// `other`, row-major.
    fn cross_squared_distances(&self, other: &Self) -> Vec<f64> {
        let mut d2 = Vec::with_capacity(self.len() * other.len());
        for a in 0..self.len() {
            for b in 0..other.len() {
                d2.push(squared_distance(self.row(a), other.row(b)));
            }
        }
        d2
    }

    /// Squared distances between all distinct rows, row-major `U × U`.
    fn squared_distances(&self) -> Vec<f64> {
        let u = self.len();
        let mut d2 = vec![0.0; u * u];
        for a in 0..u {
            for b in a + 1..u {
                let d = squared_distance(self.row(a), self.row(b));
                d2[a * u + b] = d;
                d2[b * u + a] = d;
            }
        }
        d2
    }

    /// Gaussian tables `exp(f_l · d²)`, one per exponent factor.
    fn gaussian_tables(d2: &[f64], factors: &[f64]) -> Vec<Vec<f64>> {
        factors.iter().map(|f| d2.iter().map(|d| (d * f).exp()).collect()).collect()
    }

    /// Set kernel between sets `i` and `j` at each scale, added to `out`.
    fn accumulate(&self, tables: &[Vec<f64>], i: usize, j: usize, out: &mut [f64]) {
        self.accumulate_cross(self, tables, i, j, out);
    }

    /// Like [`VertexPool::accumulate`] with set `j` taken from `other` and
    /// tables laid out as `self × other`.
    fn accumulate_cross(&self, other: &Self, tables: &[Vec<f64>], i: usize, j: usize, out: &mut [f64]) {
        let width = other.len();
        for &(a, ca) in &self.members[i] {
            for &(b, cb) in &other.members[j] {
                let w = ca * cb;
                let at = a * width + b;
                for (acc, t) in out.iter_mut().zip(tables) {
                    *acc += w * t[at];
                }
            }
        }
    }
}

/// Gram matrix of [`multiscale_kernel`] over `sets`.
///
/// Only the upper triangle is evaluated; the lower one is its mirror.
pub fn gram(sets: &[EmbeddingSet], scales: &ScaleParams) -> Result<GramMatrix> {
    let refs: Vec<&EmbeddingSet> = sets.iter().collect();
    check_dims(&refs)?;
    let pool = VertexPool::build(&refs);
    if pool.len() > POOL_LIMIT {
        return Ok(gram_direct(sets, scales));
    }
    let n = sets.len();
    let s = scales.len();
    let tables = VertexPool::gaussian_tables(&pool.squared_distances(), &exponent_factors(scales.sigmas()));
    let mut per_scale = vec![Array2::zeros((n, n)); s];
    let mut values = Array2::zeros((n, n));
    let mut buf = vec![0.0; s];
    for i in 0..n {
        for j in i..n {
            buf.fill(0.0);
            pool.accumulate(&tables, i, j, &mut buf);
            store_pair(&mut per_scale, &mut values, i, j, &buf, scales.betas());
        }
    }
    Ok(GramMatrix { values, per_scale })
}

fn store_pair(per_scale: &mut [Array2<f64>], values: &mut Array2<f64>, i: usize, j: usize, buf: &[f64], betas: &[f64]) {
    for (l, &k) in buf.iter().enumerate() {
        per_scale[l][[i, j]] = k;
        per_scale[l][[j, i]] = k;
    }
    let k = combine(buf, betas);
    values[[i, j]] = k;
    values[[j, i]] = k;
}

/// Pair-by-pair evaluation without pooling.
pub(crate) fn gram_direct(sets: &[EmbeddingSet], scales: &ScaleParams) -> GramMatrix {
    let n = sets.len();
    let s = scales.len();
    let factors = exponent_factors(scales.sigmas());
    let mut per_scale = vec![Array2::zeros((n, n)); s];
    let mut values = Array2::zeros((n, n));
    let mut buf = vec![0.0; s];
    for i in 0..n {
        for j in i..n {
            buf.fill(0.0);
            accumulate_set_kernels(&sets[i], &sets[j], &factors, &mut buf);
            store_pair(&mut per_scale, &mut values, i, j, &buf, scales.betas());
        }
    }
    GramMatrix { values, per_scale }
}

/// Rectangular kernel matrix: entry `(i, j)` is the multi-scale kernel
/// between `rows[i]` and `cols[j]`.
pub fn cross_gram(rows: &[EmbeddingSet], cols: &[EmbeddingSet], scales: &ScaleParams) -> Result<Array2<f64>> {
    let refs: Vec<&EmbeddingSet> = rows.iter().chain(cols).collect();
    check_dims(&refs)?;
    let factors = exponent_factors(scales.sigmas());
    let mut buf = vec![0.0; scales.len()];
    let mut out = Array2::zeros((rows.len(), cols.len()));
    let row_pool = VertexPool::build(&refs[..rows.len()]);
    let col_pool = VertexPool::build(&refs[rows.len()..]);
    if row_pool.len().max(col_pool.len()) > POOL_LIMIT {
        for (i, x) in rows.iter().enumerate() {
            for (j, y) in cols.iter().enumerate() {
                buf.fill(0.0);
                accumulate_set_kernels(x, y, &factors, &mut buf);
                out[[i, j]] = combine(&buf, scales.betas());
            }
        }
        return Ok(out);
    }
    let tables = VertexPool::gaussian_tables(&row_pool.cross_squared_distances(&col_pool), &factors);
    for i in 0..rows.len() {
        for j in 0..cols.len() {
            buf.fill(0.0);
            row_pool.accumulate_cross(&col_pool, &tables, i, j, &mut buf);
            out[[i, j]] = combine(&buf, scales.betas());
        }
    }
    Ok(out)
}

/// Evaluates the mean map `Σ_{v∈X} k_σ(v, g)` at each grid point `g`.
pub fn mean_map_grid(x: &EmbeddingSet, sigma: f64, grid: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let factor = -0.5 / (sigma * sigma);
    grid.iter()
        .map(|g| {
            if g.len() != x.dim() {
                return Err(Error::dims("grid point", x.dim(), g.len()));
            }
            Ok(x.rows().map(|v| (squared_distance(v, g) * factor).exp()).sum())
        })
        .collect()
}

/// Gradients of a scalar loss through [`gram`].
#[derive(Debug, Clone)]
pub(crate) struct GramGrads {
    /// Gradient w.r.t. each embedding set, shaped like its vectors.
    pub sets: Vec<Array2<f64>>,
    pub sigmas: Vec<f64>,
    pub betas: Vec<f64>,
}

/// Pulls `d_k = ∂loss/∂K` back to the embeddings and the scale parameters.
///
/// `d_k` is taken entry-wise over the full matrix; because `K[i][j]` and
/// `K[j][i]` are one evaluation, the two entries' gradients are summed.
pub(crate) fn gram_backward(
    sets: &[EmbeddingSet],
    scales: &ScaleParams,
    gram: &GramMatrix,
    d_k: &Array2<f64>,
) -> GramGrads {
    let refs: Vec<&EmbeddingSet> = sets.iter().collect();
    let pool = VertexPool::build(&refs);
    if pool.len() > POOL_LIMIT {
        return gram_backward_direct(sets, scales, gram, d_k);
    }
    let n = sets.len();
    let s = scales.len();
    let u = pool.len();
    let m = pool.dim;
    let sigmas = scales.sigmas();
    let betas = scales.betas();
    let d2 = pool.squared_distances();
    let tables = VertexPool::gaussian_tables(&d2, &exponent_factors(sigmas));

    // S = d_k + d_kᵀ; every quantity below is linear in S, with the halving
    // on symmetric sums accounting for each unordered pair appearing twice
    let sym = d_k + &d_k.t();

    let mut d_betas = vec![0.0; s];
    for (l, k) in gram.per_scale.iter().enumerate() {
        d_betas[l] = 0.5 * (&sym * k).sum();
    }

    // A = S · M, with M[j][u] the multiplicity of distinct row u in set j
    let mut a = vec![0.0; n * u];
    for i in 0..n {
        let a_i = &mut a[i * u..(i + 1) * u];
        for j in 0..n {
            let w = sym[[i, j]];
            if w == 0.0 {
                continue;
            }
            for &(b, c) in &pool.members[j] {
                a_i[b] += w * c;
            }
        }
    }

    // B = Mᵀ · A
    let mut b_mat = vec![0.0; u * u];
    for i in 0..n {
        let a_i = &a[i * u..(i + 1) * u];
        for &(r, c) in &pool.members[i] {
            for (dst, src) in b_mat[r * u..(r + 1) * u].iter_mut().zip(a_i) {
                *dst += c * src;
            }
        }
    }

    // ∂k/∂σ_l = β_l Σ e_l ‖a-b‖² / σ_l³
    let mut d_sigmas = vec![0.0; s];
    for l in 0..s {
        let total: f64 = tables[l].iter().zip(&d2).zip(&b_mat).map(|((e, d), w)| e * d * w).sum();
        d_sigmas[l] = 0.5 * betas[l] * total / sigmas[l].powi(3);
    }

    // Q[u][v] = Σ_l β_l e_l(u, v) / σ_l², so ∂k(x, y)/∂x = Σ_l ... = Q (y - x)
    let mut q = vec![0.0; u * u];
    for l in 0..s {
        let c = betas[l] / (sigmas[l] * sigmas[l]);
        for (dst, e) in q.iter_mut().zip(&tables[l]) {
            *dst += c * e;
        }
    }

    let mut grads = Vec::with_capacity(n);
    let mut pulled = vec![0.0; m];
    for i in 0..n {
        let a_i = &a[i * u..(i + 1) * u];
        // gradient for one vertex of each distinct row present in set i
        let mut per_row: Vec<(usize, Vec<f64>)> = Vec::with_capacity(pool.members[i].len());
        for &(r, _) in &pool.members[i] {
            pulled.fill(0.0);
            let mut total = 0.0;
            let q_r = &q[r * u..(r + 1) * u];
            for v in 0..u {
                let coef = a_i[v] * q_r[v];
                if coef == 0.0 {
                    continue;
                }
                total += coef;
                for (p, x) in pulled.iter_mut().zip(pool.row(v)) {
                    *p += coef * x;
                }
            }
            let g = pulled.iter().zip(pool.row(r)).map(|(p, x)| p - total * x).collect();
            per_row.push((r, g));
        }
        let mut g = Array2::zeros((sets[i].len(), m));
        for (vertex, id) in pool.ids[i].iter().enumerate() {
            let (_, row) = per_row.iter().find(|(r, _)| r == id).expect("row present in its set");
            g.row_mut(vertex).assign(&ndarray::ArrayView1::from(row.as_slice()));
        }
        grads.push(g);
    }

    GramGrads {
        sets: grads,
        sigmas: d_sigmas,
        betas: d_betas,
    }
}

/// Pair-by-pair version of [`gram_backward`].
pub(crate) fn gram_backward_direct(
    sets: &[EmbeddingSet],
    scales: &ScaleParams,
    gram: &GramMatrix,
    d_k: &Array2<f64>,
) -> GramGrads {
    let n = sets.len();
    let s = scales.len();
    let sigmas = scales.sigmas();
    let betas = scales.betas();
    let factors = exponent_factors(sigmas);
    let m = sets.first().map_or(0, |x| x.dim());

    let mut d_sets: Vec<Vec<f64>> = sets.iter().map(|x| vec![0.0; x.as_flat().len()]).collect();
    let mut d_sigmas = vec![0.0; s];
    let mut d_betas = vec![0.0; s];
    // per pair: Σ_{a,b} e_l(a,b)·‖a-b‖²
    let mut weighted_d2 = vec![0.0; s];
    let mut e = vec![0.0; s];

    for i in 0..n {
        for j in i..n {
            let w = if i == j { d_k[[i, i]] } else { d_k[[i, j]] + d_k[[j, i]] };
            if w == 0.0 {
                continue;
            }
            for l in 0..s {
                d_betas[l] += w * gram.per_scale[l][[i, j]];
            }
            weighted_d2.fill(0.0);
            // on the diagonal both arguments move with the same set
            let side = if i == j { 2.0 * w } else { w };
            let (xi, xj) = (&sets[i], &sets[j]);
            let mut grad_j = if i == j { Vec::new() } else { std::mem::take(&mut d_sets[j]) };
            let grad_i = &mut d_sets[i];
            for (ai, a) in xi.rows().enumerate() {
                let ga = &mut grad_i[ai * m..(ai + 1) * m];
                for (bi, b) in xj.rows().enumerate() {
                    let d2 = squared_distance(a, b);
                    let mut coef = 0.0;
                    for l in 0..s {
                        e[l] = (d2 * factors[l]).exp();
                        weighted_d2[l] += e[l] * d2;
                        coef += betas[l] * e[l] / (sigmas[l] * sigmas[l]);
                    }
                    if coef == 0.0 {
                        continue;
                    }
                    // ∂k/∂a = Σ_l β_l e_l (b - a) / σ_l²
                    let ca = side * coef;
                    for k in 0..m {
                        ga[k] += ca * (b[k] - a[k]);
                    }
                    if i != j {
                        let gb = &mut grad_j[bi * m..(bi + 1) * m];
                        let cb = w * coef;
                        for k in 0..m {
                            gb[k] += cb * (a[k] - b[k]);
                        }
                    }
                }
            }
            if i != j {
                d_sets[j] = grad_j;
            }
            // ∂k/∂σ_l = β_l Σ e_l ‖a-b‖² / σ_l³
            for l in 0..s {
                d_sigmas[l] += w * betas[l] * weighted_d2[l] / sigmas[l].powi(3);
            }
        }
    }

    let sets = d_sets
        .into_iter()
        .zip(sets)
        .map(|(g, x)| Array2::from_shape_vec((x.len(), x.dim()), g).expect("shape matches set"))
        .collect();
    GramGrads {
        sets,
        sigmas: d_sigmas,
        betas: d_betas,
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    fn set(rows: &[&[f64]]) -> EmbeddingSet {
        EmbeddingSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(gaussian(&[0.3, -2.0], &[0.3, -2.0], 0.7).unwrap(), 1.0);
        assert_relative_eq!(gaussian(&[0.0, 0.0], &[1.0, 0.0], 1.0).unwrap(), 0.606_530_659_712_633_4, epsilon = 1e-15);
        assert!(matches!(gaussian(&[0.0], &[0.0, 1.0], 1.0), Err(Error::DimensionMismatch { .. })));
        assert!(gaussian(&[0.0], &[1.0], SIGMA_MIN / 2.0).is_err());
        assert!(gaussian(&[0.0], &[1.0], f64::NAN).is_err());
    }

    #[test]
    fn set_kernel_examples() {
        let u = set(&[&[0.2, 1.0]]);
        let v = set(&[&[-1.0, 0.5]]);
        assert_eq!(set_kernel(&u, &v, 0.8).unwrap(), gaussian(u.row(0), v.row(0), 0.8).unwrap());

        let x = set(&[&[0.0, 1.0], &[2.0, 3.0], &[-4.0, 0.5]]);
        let y = set(&[&[1.0, 1.0], &[0.0, 0.0], &[7.0, 2.0], &[3.0, -3.0]]);
        assert!((set_kernel(&x, &y, 1e12).unwrap() - 12.0).abs() <= 1e-6);

        let x = set(&[&[0.0], &[1.0]]);
        let y = set(&[&[0.0]]);
        assert_relative_eq!(set_kernel(&x, &y, 1.0).unwrap(), 1.606_530_659_712_633_4, epsilon = 1e-15);

        let empty = EmbeddingSet::new(Array2::zeros((0, 1)));
        assert!(matches!(set_kernel(&empty, &y, 1.0), Err(Error::Empty(_))));
        assert!(matches!(set_kernel(&u, &y, 1.0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn multiscale_examples() {
        let x = set(&[&[0.0, 1.0], &[1.5, 0.0]]);
        let y = set(&[&[0.5, 0.5]]);
        let one = ScaleParams::new(vec![0.7], vec![1.0]).unwrap();
        assert_eq!(multiscale_kernel(&x, &y, &one).unwrap(), set_kernel(&x, &y, 0.7).unwrap());

        let zero = ScaleParams::new(vec![0.7, 2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(multiscale_kernel(&x, &y, &zero).unwrap(), 0.0);

        let two = ScaleParams::new(vec![0.7, 2.0], vec![1.0, 2.0]).unwrap();
        let a = set_kernel(&x, &y, 0.7).unwrap();
        let b = set_kernel(&x, &y, 2.0).unwrap();
        assert_relative_eq!(multiscale_kernel(&x, &y, &two).unwrap(), a + 2.0 * b, max_relative = 1e-15);
    }

    #[test]
    fn scale_params_validation() {
        assert!(ScaleParams::new(vec![1.0], vec![1.0, 1.0]).is_err());
        assert!(ScaleParams::new(vec![0.0], vec![1.0]).is_err());
        assert!(ScaleParams::new(vec![1.0], vec![-0.1]).is_err());
        assert!(ScaleParams::new(vec![], vec![]).is_err());
        assert_eq!(ScaleParams::halving(2).unwrap().sigmas(), &[1.0, 0.5]);
    }

    #[test]
    fn gram_single_and_reversed() {
        let scales = ScaleParams::new(vec![0.9, 0.3], vec![1.0, 0.5]).unwrap();
        let x = set(&[&[0.0, 1.0], &[1.5, 0.0]]);
        let g = gram(std::slice::from_ref(&x), &scales).unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.values()[[0, 0]], multiscale_kernel(&x, &x, &scales).unwrap());

        let sets = vec![x, set(&[&[0.1, 0.1]]), set(&[&[2.0, 2.0], &[0.0, 0.3], &[1.0, 1.0]])];
        let fwd = gram(&sets, &scales).unwrap();
        let rev: Vec<_> = sets.iter().rev().cloned().collect();
        let bwd = gram(&rev, &scales).unwrap();
        let n = sets.len();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(fwd.values()[[i, j]], bwd.values()[[n - 1 - j, n - 1 - i]]);
                assert_eq!(fwd.values()[[i, j]], fwd.values()[[j, i]]);
            }
        }
        assert_eq!(fwd.per_scale().len(), 2);
    }

    #[test]
    fn gram_rejects_mixed_dims() {
        let scales = ScaleParams::halving(1).unwrap();
        assert!(gram(&[set(&[&[0.0]]), set(&[&[0.0, 1.0]])], &scales).is_err());
    }

    #[test]
    fn mean_map_examples() {
        let x = set(&[&[0.25, -0.5]]);
        let v = mean_map_grid(&x, 0.1, &[vec![0.25, -0.5], vec![3.0, 3.0]]).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(v[1] < 1e-100);
        assert!(mean_map_grid(&x, 0.1, &[vec![0.0]]).is_err());
    }

    #[test]
    fn cross_gram_matches_gram() {
        let scales = ScaleParams::new(vec![0.9, 0.3], vec![1.0, 0.5]).unwrap();
        let sets = vec![set(&[&[0.0, 1.0], &[1.5, 0.0]]), set(&[&[0.1, 0.1]])];
        let g = gram(&sets, &scales).unwrap();
        let c = cross_gram(&sets, &sets, &scales).unwrap();
        assert_eq!(&c, g.values());
    }

    /// Sets drawn from a small palette so rows repeat within and across sets.
    fn palette_sets() -> Vec<EmbeddingSet> {
        let palette = [[0.0, 1.0, -0.5], [0.3, 0.2, 0.1], [1.2, -0.7, 0.4], [-0.9, 0.0, 2.0]];
        let picks: [&[usize]; 4] = [&[0, 1, 1, 2], &[3], &[2, 2, 0], &[1, 3, 0, 3, 1]];
        picks
            .iter()
            .map(|p| EmbeddingSet::from_rows(&p.iter().map(|&k| palette[k].to_vec()).collect::<Vec<_>>()).unwrap())
            .collect()
    }

    #[test]
    fn pooled_gram_matches_direct() {
        let sets = palette_sets();
        let scales = ScaleParams::new(vec![0.8, 0.35], vec![1.0, 0.6]).unwrap();
        let pooled = gram(&sets, &scales).unwrap();
        let direct = gram_direct(&sets, &scales);
        for (p, d) in pooled.values().iter().zip(direct.values()) {
            assert_relative_eq!(p, d, max_relative = 1e-13);
        }
        let cross = cross_gram(&sets[..2], &sets, &scales).unwrap();
        for i in 0..2 {
            for j in 0..sets.len() {
                assert_relative_eq!(cross[[i, j]], direct.values()[[i, j]], max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn pooled_backward_matches_direct() {
        let sets = palette_sets();
        let scales = ScaleParams::new(vec![0.8, 0.35], vec![1.0, 0.6]).unwrap();
        let g = gram(&sets, &scales).unwrap();
        let n = sets.len();
        let d_k = Array2::from_shape_fn((n, n), |(i, j)| ((3 * i + 5 * j) % 7) as f64 / 7.0 - 0.4);
        let pooled = gram_backward(&sets, &scales, &g, &d_k);
        let direct = gram_backward_direct(&sets, &scales, &g, &d_k);
        for (p, d) in pooled.sets.iter().zip(&direct.sets) {
            for (a, b) in p.iter().zip(d) {
                assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-11);
            }
        }
        for l in 0..2 {
            assert_relative_eq!(pooled.sigmas[l], direct.sigmas[l], max_relative = 1e-12);
            assert_relative_eq!(pooled.betas[l], direct.betas[l], max_relative = 1e-12);
        }
    }
}
