//! Interior elimination on one extended subdomain.

use std::sync::Arc;

use faer::Mat;

use crate::error::{check_len, Error, Result};
use crate::linalg::{CsrMatrix, SparseCholesky};

/// Factorization of the interior block `A'_{i,II}`.
#[derive(Debug)]
pub struct InteriorFactor {
    pub subdomain: usize,
    pub interior: Vec<usize>,
    chol: SparseCholesky,
}

/// Factors the interior block of `a` restricted to `interior`.
pub fn factor_interior(
    subdomain: usize,
    a: &CsrMatrix,
    interior: &[usize],
) -> Result<InteriorFactor> {
    let a_ii = a.submatrix(interior, interior);
    let chol = SparseCholesky::new(&a_ii).map_err(|e| {
        Error::InvalidConfig(format!(
            "interior block of subdomain {subdomain} is not positive definite ({e})"
        ))
    })?;
    Ok(InteriorFactor {
        subdomain,
        interior: interior.to_vec(),
        chol,
    })
}

impl InteriorFactor {
    pub fn dim(&self) -> usize {
        self.interior.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(b)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.chol.solve_in_place(b)
    }
}

/// `S = A_BB − A_BI A_II⁻¹ A_IB` in operator form for a boundary set `B`.
#[derive(Debug, Clone)]
pub struct SchurOperator {
    pub boundary: Vec<usize>,
    factor: Arc<InteriorFactor>,
    a_bb: CsrMatrix,
    a_bi: CsrMatrix,
    a_ib: CsrMatrix,
}

impl SchurOperator {
    pub fn new(a: &CsrMatrix, factor: Arc<InteriorFactor>, boundary: &[usize]) -> Self {
        let interior = &factor.interior;
        Self {
            boundary: boundary.to_vec(),
            a_bb: a.submatrix(boundary, boundary),
            a_bi: a.submatrix(boundary, interior),
            a_ib: a.submatrix(interior, boundary),
            factor,
        }
    }

    pub fn dim(&self) -> usize {
        self.boundary.len()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut w = self.a_ib.mul_vec(u);
        self.factor.solve_in_place(&mut w);
        let mut out = self.a_bb.mul_vec(u);
        let corr = self.a_bi.mul_vec(&w);
        for (o, c) in out.iter_mut().zip(&corr) {
            *o -= c;
        }
        out
    }

    pub fn try_apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), u.len())?;
        Ok(self.apply(u))
    }

    /// Interior values of the discrete harmonic extension of `u`.
    pub fn extend_interior(&self, u: &[f64]) -> Vec<f64> {
        let mut w = self.a_ib.mul_vec(u);
        self.factor.solve_in_place(&mut w);
        for v in &mut w {
            *v = -*v;
        }
        w
    }

    /// Explicit dense matrix, column by column.
    pub fn dense(&self) -> Mat<f64> {
        crate::linalg::dense_from_operator(self.dim(), |e| self.apply(e))
    }
}

/// Discrete harmonic extension into a full local vector of length `n`.
#[derive(Debug, Clone)]
pub struct HarmonicExtender {
    schur: SchurOperator,
    n: usize,
}

impl HarmonicExtender {
    pub fn new(schur: SchurOperator, n: usize) -> Self {
        Self { schur, n }
    }

    pub fn extend(&self, u_b: &[f64]) -> Vec<f64> {
        let w = self.schur.extend_interior(u_b);
        let mut out = vec![0.0; self.n];
        for (&k, &v) in self.schur.factor.interior.iter().zip(&w) {
            out[k] = v;
        }
        for (&k, &v) in self.schur.boundary.iter().zip(u_b) {
            out[k] = v;
        }
        out
    }
}

/// Local Schur data of one subdomain: `S'_i` on `Γ'_i` and `S'_{i,Δ}`.
#[derive(Debug, Clone)]
pub struct LocalSchur {
    pub factor: Arc<InteriorFactor>,
    pub full: SchurOperator,
    pub delta: SchurOperator,
    pub n: usize,
}

impl LocalSchur {
    pub fn new(
        subdomain: usize,
        a: &CsrMatrix,
        interior: &[usize],
        gamma_prime: &[usize],
        delta: &[usize],
    ) -> Result<Self> {
        let factor = Arc::new(factor_interior(subdomain, a, interior)?);
        Ok(Self {
            full: SchurOperator::new(a, factor.clone(), gamma_prime),
            delta: schur_delta(a, factor.clone(), delta),
            factor,
            n: a.nrows(),
        })
    }

    pub fn extender(&self) -> HarmonicExtender {
        HarmonicExtender::new(self.full.clone(), self.n)
    }
}

/// `S'_{i,Δ}`: zero extension on the corner dofs, `S'_i`, restriction to `Δ`.
pub fn schur_delta(a: &CsrMatrix, factor: Arc<InteriorFactor>, delta: &[usize]) -> SchurOperator {
    SchurOperator::new(a, factor, delta)
}

/// Dense Schur complement by explicit elimination, for verification.
pub fn dense_schur(a: &Mat<f64>, keep: &[usize], eliminate: &[usize]) -> Result<Mat<f64>> {
    let nk = keep.len();
    let ne = eliminate.len();
    let a_ee = Mat::<f64>::from_fn(ne, ne, |r, c| a[(eliminate[r], eliminate[c])]);
    let chol = crate::linalg::DenseCholesky::new(&a_ee)?;
    let mut out = Mat::<f64>::from_fn(nk, nk, |r, c| a[(keep[r], keep[c])]);
    for c in 0..nk {
        let mut col: Vec<f64> = (0..ne).map(|r| a[(eliminate[r], keep[c])]).collect();
        chol.solve_in_place(&mut col);
        for r in 0..nk {
            let mut acc = 0.0;
            for (e, &x) in eliminate.iter().zip(&col) {
                acc += a[(keep[r], *e)] * x;
            }
            out[(r, c)] -= acc;
        }
    }
    Ok(out)
}
