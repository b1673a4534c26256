//! Small sparse/dense linear algebra layer.
//!
//! Assembly produces [`CsrMatrix`] values; factorizations are delegated to
//! `faer` (supernodal sparse Cholesky with a fill-reducing ordering, dense
//! Cholesky and the dense self-adjoint eigensolver).

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatMut, Side};

use crate::error::{check_len, Error, Result};

/// Coordinate-format accumulator. Duplicates are summed in insertion order.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(mut self) -> CsrMatrix {
        // stable sort keeps the summation order deterministic
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// Checked product, for public entry points taking user vectors.
    pub fn try_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.ncols, x.len())?;
        Ok(self.mul_vec(x))
    }

    /// `y += A x`
    pub fn mul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *out += acc;
        }
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    /// Extracts `A[rows, cols]`; index lists need not be sorted.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut b = TripletBuilder::new(rows.len(), cols.len());
        for (k, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                let mapped = col_map[c];
                if mapped != usize::MAX {
                    b.push(k, mapped, v);
                }
            }
        }
        b.build()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        // CSR of a symmetric matrix read as CSC is its transpose, i.e. itself
        let mut trip = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                trip.push(Triplet::new(c, r, v));
            }
        }
        SparseColMat::try_new_from_triplets(self.ncols, self.nrows, &trip)
            .map_err(|e| Error::InvalidConfig(format!("sparse conversion failed: {e:?}")))
    }

    /// Writes `row col value` lines (zero based).
    pub fn write_triplets<W: Write>(&self, mut out: W) -> Result<()> {
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                writeln!(out, "{r} {c} {v:.17e}")?;
            }
        }
        Ok(())
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    dim: usize,
    llt: Option<faer::sparse::linalg::solvers::Llt<usize, f64>>,
}

impl SparseCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        check_len(a.nrows(), a.ncols())?;
        if a.nrows() == 0 {
            return Ok(Self { dim: 0, llt: None });
        }
        let llt = a
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::NotPositiveDefinite(format!("{e:?}")))?;
        Ok(Self {
            dim: a.nrows(),
            llt: Some(llt),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.dim);
        if let Some(llt) = &self.llt {
            let n = b.len();
            llt.solve_in_place(MatMut::from_column_major_slice_mut(b, n, 1));
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves for every column of a column-major block in place.
    pub fn solve_columns_in_place(&self, block: &mut [f64], ncols: usize) {
        if ncols == 0 || self.dim == 0 {
            return;
        }
        if let Some(llt) = &self.llt {
            llt.solve_in_place(MatMut::from_column_major_slice_mut(block, self.dim, ncols));
        }
    }
}

/// Dense Cholesky factorization.
#[derive(Debug)]
pub struct DenseCholesky {
    dim: usize,
    llt: Option<faer::linalg::solvers::Llt<f64>>,
}

impl DenseCholesky {
    pub fn new(a: &Mat<f64>) -> Result<Self> {
        check_len(a.nrows(), a.ncols())?;
        if a.nrows() == 0 {
            return Ok(Self { dim: 0, llt: None });
        }
        let llt = a
            .llt(Side::Lower)
            .map_err(|e| Error::NotPositiveDefinite(format!("{e:?}")))?;
        Ok(Self {
            dim: a.nrows(),
            llt: Some(llt),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.dim);
        if let Some(llt) = &self.llt {
            let n = b.len();
            llt.solve_in_place(MatMut::from_column_major_slice_mut(b, n, 1));
        }
    }

    /// Lower factor `L` with `A = L Lᵀ`.
    pub fn factor_l(&self) -> Mat<f64> {
        match &self.llt {
            Some(llt) => llt.L().to_owned(),
            None => Mat::zeros(0, 0),
        }
    }
}

/// Eigenvalues of a dense symmetric matrix in nondecreasing order.
pub fn symmetric_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::InvalidConfig(format!("eigensolver failed: {e:?}")))
}

/// Eigenvalues `(re, im)` of a general dense matrix.
pub fn general_eigenvalues(a: &Mat<f64>) -> Result<Vec<(f64, f64)>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let ev = a
        .eigenvalues()
        .map_err(|e| Error::InvalidConfig(format!("eigensolver failed: {e:?}")))?;
    Ok(ev.iter().map(|z| (z.re, z.im)).collect())
}

/// Eigenpairs of a dense symmetric matrix, plus the worst residual
/// `max_k ‖A v_k − λ_k v_k‖`.
pub fn symmetric_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>, f64)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0), 0.0));
    }
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::InvalidConfig(format!("eigensolver failed: {e:?}")))?;
    let values: Vec<f64> = (0..n).map(|k| evd.S()[k]).collect();
    let vectors = evd.U().to_owned();
    let mut worst = 0.0f64;
    for k in 0..n {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += a[(i, j)] * vectors[(j, k)];
            }
            worst = worst.max((acc - values[k] * vectors[(i, k)]).abs());
        }
    }
    Ok((values, vectors, worst))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Dense matrix of a linear operator, built column by column.
pub fn dense_from_operator<F>(n: usize, mut apply: F) -> Mat<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut out = Mat::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = apply(&e);
        for i in 0..n {
            out[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    out
}

pub fn dense_mul_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

pub fn dense_max_abs(a: &Mat<f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 2.0);
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
                b.push(i + 1, i, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 1, 1.0);
        b.push(0, 1, 2.5);
        b.push(1, 0, -1.0);
        let a = b.build();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), 3.5);
        assert_eq!(a.get(1, 1), 0.0);
    }

    #[test]
    fn sparse_cholesky_solves() {
        let a = laplace_1d(40);
        let chol = SparseCholesky::new(&a).unwrap();
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let x = chol.solve(&b);
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= 1e-12 * norm2(&b));
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(1, 1, -1.0);
        assert!(matches!(
            SparseCholesky::new(&b.build()),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn submatrix_picks_entries() {
        let a = laplace_1d(5);
        let s = a.submatrix(&[1, 3], &[0, 1, 2]);
        assert_eq!(s.nrows(), 2);
        assert_eq!(s.get(0, 0), -1.0);
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(1, 2), -1.0);
    }

    #[test]
    fn eigen_residual_small() {
        let a = laplace_1d(6).to_dense();
        let (vals, _, res) = symmetric_eigen(&a).unwrap();
        assert!(res < 1e-12);
        assert!(vals[0] > 0.0);
    }
}
