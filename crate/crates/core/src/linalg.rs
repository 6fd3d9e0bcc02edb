//! Dense linear algebra for desk-scale problems.
//!
//! Everything here works on [`DenseMatrix`], a row-major `f64` matrix. The
//! routines are sized for matrices up to a couple of thousand rows:
//!
//! - [`eig_sym`]: cyclic Jacobi rotations on a symmetric matrix.
//! - [`svd`]: one-sided (Hestenes) Jacobi, which keeps tiny singular values
//!   accurate to roughly `eps * s_1` instead of `sqrt(eps) * s_1`.
//! - [`numerical_rank`], [`nullspace_basis`]: rank decisions relative to `s_1`.
//! - [`solve_lower_triangular`]: forward substitution.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative rank tolerance used when a caller has no better value.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

const EIG_OFF_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Row-major dense matrix: `data[i * cols + j]` holds entry `(i, j)`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major data, checking length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "DenseMatrix::from_vec",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Convenience constructor for literals; panics on ragged rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), n_cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self { rows: n_rows, cols: n_cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch { context: "matmul", expected: self.cols, got: rhs.rows });
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = rhs.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch { context: "matvec", expected: self.cols, got: x.len() });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), x)).collect())
    }

    /// `selfᵀ · y`.
    pub fn tr_matvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch { context: "tr_matvec", expected: self.rows, got: y.len() });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        Ok(out)
    }

    /// `selfᵀ · self`, computed with exact symmetry.
    pub fn gram(&self) -> DenseMatrix {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for (j, rj) in row.iter().enumerate().skip(i) {
                    g.data[i * n + j] += ri * rj;
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i];
            }
        }
        g
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows).map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `(A + Aᵀ) / 2` for a square matrix.
    pub fn symmetrized(&self) -> DenseMatrix {
        assert!(self.is_square());
        let n = self.rows;
        let mut s = self.clone();
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Eigenvalues (ascending) and, column `k` of `eigenvectors`, the matching
/// orthonormal eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Option<DenseMatrix>,
}

impl Spectrum {
    pub fn max_abs(&self) -> f64 {
        norm_inf(&self.eigenvalues)
    }

    /// Rebuilds `V diag(λ) Vᵀ`; `None` when eigenvectors were not kept.
    pub fn reconstruct(&self) -> Option<DenseMatrix> {
        let v = self.eigenvectors.as_ref()?;
        let n = v.rows();
        let mut out = DenseMatrix::zeros(n, n);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            for i in 0..n {
                let vik = v[(i, k)] * lam;
                for j in 0..n {
                    out[(i, j)] += vik * v[(j, k)];
                }
            }
        }
        Some(out)
    }
}

fn check_symmetric(a: &DenseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::contract(format!("eig_sym needs a square matrix, got {}x{}", a.rows(), a.cols())));
    }
    if a.rows() == 0 {
        return Err(Error::contract("eig_sym needs dimension >= 1"));
    }
    if !a.is_finite() {
        return Err(Error::contract("eig_sym input has non-finite entries"));
    }
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let n = a.rows();
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::contract(format!("eig_sym input is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal Frobenius norm drops below
/// `1e-12 * ‖A‖_F`. Eigenvalues come back ascending.
pub fn eig_sym(a: &DenseMatrix) -> Result<Spectrum> {
    check_symmetric(a)?;
    let n = a.rows();
    let mut w = a.symmetrized();
    let mut v = DenseMatrix::identity(n);
    let total = w.frobenius_norm();
    let target = EIG_OFF_TOL * total;

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&w) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = w[(p, p)];
                let aqq = w[(q, q)];
                // Below rounding of both diagonal entries: annihilate without rotating.
                let g = 100.0 * apq.abs();
                if app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    w[(p, q)] = 0.0;
                    w[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut w, &mut v, p, q, c, s, t, apq);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(i, i)].total_cmp(&w[(j, j)]));
    let eigenvalues = order.iter().map(|&i| w[(i, i)]).collect();
    let mut vecs = DenseMatrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        for i in 0..n {
            vecs[(i, k)] = v[(i, src)];
        }
    }
    Ok(Spectrum { eigenvalues, eigenvectors: Some(vecs) })
}

fn off_diagonal_norm(w: &DenseMatrix) -> f64 {
    let n = w.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += w[(i, j)] * w[(i, j)];
            }
        }
    }
    s.sqrt()
}

#[allow(clippy::too_many_arguments)]
fn rotate(w: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64, t: f64, apq: f64) {
    let n = w.rows();
    let tau = s / (1.0 + c);
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = w[(k, p)];
        let akq = w[(k, q)];
        let new_kp = akp - s * (akq + tau * akp);
        let new_kq = akq + s * (akp - tau * akq);
        w[(k, p)] = new_kp;
        w[(p, k)] = new_kp;
        w[(k, q)] = new_kq;
        w[(q, k)] = new_kq;
    }
    w[(p, p)] -= t * apq;
    w[(q, q)] += t * apq;
    w[(p, q)] = 0.0;
    w[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp - s * (vkq + tau * vkp);
        v[(k, q)] = vkq + s * (vkp - tau * vkq);
    }
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ` with a full
/// right-singular basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    /// Descending, length `cols`; trailing entries are (numerically) zero
    /// whenever `cols > rows`.
    pub singular_values: Vec<f64>,
    /// `cols x cols` orthogonal; column `k` pairs with `singular_values[k]`.
    pub v: DenseMatrix,
    /// `rows x cols`; column `k` is `A v_k / s_k`, or zero when `s_k == 0`.
    pub u: DenseMatrix,
}

impl Svd {
    pub fn largest(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Right-singular vector `k` as an owned vector.
    pub fn right_vector(&self, k: usize) -> Vec<f64> {
        self.v.column(k)
    }

    /// Minimum-norm least-squares solution of `A x = b`, treating singular
    /// values at or below `rel_cutoff * s_1` as zero.
    pub fn pseudo_solve(&self, b: &[f64], rel_cutoff: f64) -> Result<Vec<f64>> {
        if b.len() != self.u.rows() {
            return Err(Error::DimensionMismatch {
                context: "Svd::pseudo_solve",
                expected: self.u.rows(),
                got: b.len(),
            });
        }
        let n = self.v.rows();
        let cutoff = rel_cutoff * self.largest();
        let mut x = vec![0.0; n];
        for (k, &s) in self.singular_values.iter().enumerate() {
            if s <= cutoff || s == 0.0 {
                break;
            }
            let coeff = (0..b.len()).map(|i| self.u[(i, k)] * b[i]).sum::<f64>() / s;
            for (i, xi) in x.iter_mut().enumerate() {
                *xi += coeff * self.v[(i, k)];
            }
        }
        Ok(x)
    }
}

/// One-sided Jacobi SVD.
///
/// Rotates pairs of columns of a working copy `W = A V` until all pairs are
/// orthogonal to `eps`; the column norms are then the singular values. Each
/// right-singular vector is signed so its largest-magnitude component is
/// positive.
///
/// Wide matrices are handled through `Aᵀ`, whose left vectors span the row
/// space of `A`; Householder reflections complete them to a basis of `ℝⁿ`.
pub fn svd(a: &DenseMatrix) -> Result<Svd> {
    if !a.is_finite() {
        return Err(Error::contract("svd input has non-finite entries"));
    }
    if a.rows() < a.cols() {
        wide_svd(a)
    } else {
        jacobi_svd(a)
    }
}

fn wide_svd(a: &DenseMatrix) -> Result<Svd> {
    let m = a.rows();
    let n = a.cols();
    let t = jacobi_svd(&a.transpose())?;
    // t.u is n x m (right vectors of A), t.v is m x m (left vectors of A).
    let rank = t.singular_values.iter().take_while(|&&s| s > 0.0).count();
    let known: Vec<Vec<f64>> = (0..rank).map(|k| t.u.column(k)).collect();
    let complement = orthogonal_complement(&known, n);

    let mut singular_values = vec![0.0; n];
    singular_values[..rank].copy_from_slice(&t.singular_values[..rank]);
    let mut vm = DenseMatrix::zeros(n, n);
    let mut um = DenseMatrix::zeros(m, n);
    for k in 0..n {
        let mut col = if k < rank { known[k].clone() } else { complement[k - rank].clone() };
        let sign = if largest_component(&col) < 0.0 { -1.0 } else { 1.0 };
        col.iter_mut().for_each(|x| *x *= sign);
        for (i, &x) in col.iter().enumerate() {
            vm[(i, k)] = x;
        }
        if k < rank {
            for i in 0..m {
                um[(i, k)] = sign * t.v[(i, k)];
            }
        }
    }
    Ok(Svd { singular_values, v: vm, u: um })
}

fn largest_component(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best })
}

/// `n - known.len()` orthonormal vectors orthogonal to the orthonormal set
/// `known`, taken from the Householder QR of the matrix with columns `known`.
fn orthogonal_complement(known: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let r = known.len();
    let mut work: Vec<Vec<f64>> = known.to_vec();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(r);
    for k in 0..r {
        let x = &work[k];
        let alpha = norm2(&x[k..]);
        let mut v = vec![0.0; n];
        v[k..].copy_from_slice(&x[k..]);
        v[k] += if x[k] < 0.0 { -alpha } else { alpha };
        let vv = dot(&v, &v);
        if vv > 0.0 {
            for col in work.iter_mut().skip(k) {
                let f = 2.0 * dot(&v, col) / vv;
                col.iter_mut().zip(&v).for_each(|(c, vi)| *c -= f * vi);
            }
        }
        reflectors.push(v);
    }
    (r..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            for v in reflectors.iter().rev() {
                let vv = dot(v, v);
                if vv > 0.0 {
                    let f = 2.0 * dot(v, &e) / vv;
                    e.iter_mut().zip(v).for_each(|(c, vi)| *c -= f * vi);
                }
            }
            e
        })
        .collect()
}

fn jacobi_svd(a: &DenseMatrix) -> Result<Svd> {
    let m = a.rows();
    let n = a.cols();
    // Column-major working copy: cols[j] is column j of A V.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = f64::EPSILON * (m.max(1) as f64);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                rotate_pair(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = v.split_at_mut(q);
                rotate_pair(&mut lo[p], &mut hi[0], c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut singular_values = Vec::with_capacity(n);
    let mut vm = DenseMatrix::zeros(n, n);
    let mut um = DenseMatrix::zeros(m, n);
    for (k, &src) in order.iter().enumerate() {
        let s = norms[src];
        singular_values.push(s);
        let vk = &v[src];
        let sign = if largest_component(vk) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vm[(i, k)] = sign * vk[i];
        }
        if s > 0.0 {
            for i in 0..m {
                um[(i, k)] = sign * cols[src][i] / s;
            }
        }
    }
    Ok(Svd { singular_values, v: vm, u: um })
}

#[inline]
fn rotate_pair(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let xa = *a;
        let yb = *b;
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Singular values, descending, together with the right-singular basis.
///
/// Only `min(rows, cols)` values are returned; the basis is the full
/// `cols x cols` orthogonal matrix.
pub fn singular_values(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let d = svd(a)?;
    let k = a.rows().min(a.cols());
    let mut s = d.singular_values;
    s.truncate(k);
    Ok((s, d.v))
}

/// Number of singular values strictly above `rel_tol * s_1`.
pub fn numerical_rank(singular_values: &[f64], rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0) {
        return Err(Error::contract("rel_tol must be positive"));
    }
    if singular_values.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::contract("singular values must be sorted descending"));
    }
    let Some(&s1) = singular_values.first() else {
        return Ok(0);
    };
    if s1 <= 0.0 {
        return Ok(0);
    }
    let cut = rel_tol * s1;
    Ok(singular_values.iter().take_while(|&&s| s > cut).count())
}

/// Orthonormal basis of the numerical kernel of `a`, one vector per column.
pub fn nullspace_basis(a: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    let d = svd(a)?;
    let rank = numerical_rank(&d.singular_values, rel_tol)?;
    let n = a.cols();
    let mut basis = DenseMatrix::zeros(n, n - rank);
    for k in rank..n {
        for i in 0..n {
            basis[(i, k - rank)] = d.v[(i, k)];
        }
    }
    Ok(basis)
}

/// Forward substitution for `L x = rhs`.
///
/// `l` must be square with exact zeros above the diagonal.
pub fn solve_lower_triangular(l: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    if !l.is_square() {
        return Err(Error::contract(format!("triangular solve needs a square matrix, got {}x{}", l.rows(), l.cols())));
    }
    let n = l.rows();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch { context: "solve_lower_triangular", expected: n, got: rhs.len() });
    }
    for i in 0..n {
        if l.row(i)[i + 1..].iter().any(|&v| v != 0.0) {
            return Err(Error::contract(format!("matrix is not lower triangular (row {i})")));
        }
    }
    let mut x = vec![0.0; n];
    for i in 0..n {
        let diag = l[(i, i)];
        if diag == 0.0 {
            return Err(Error::Singular { row: i });
        }
        let acc = dot(&l.row(i)[..i], &x[..i]);
        x[i] = (rhs[i] - acc) / diag;
    }
    Ok(x)
}
