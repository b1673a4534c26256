//! Dense and direct reference computations for small instances.

use std::io::Write;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::{l2_error, CoefficientField, LoadFunction};
use crate::dofs::DofClass;
use crate::error::{Error, Result};
use crate::experiment::{run_case_full, ExperimentConfig};
use crate::fetidp::FetiDp;
use crate::linalg::{
    dense_from_operator, dense_max_abs, dense_mul_vec, general_eigenvalues, max_abs, norm2,
    symmetric_eigen, CsrMatrix, DenseCholesky, SparseCholesky,
};
use crate::subdomain::dense_schur;

/// Direct solution of `Âu = f`.
#[derive(Debug, Clone)]
pub struct DirectSolution {
    pub u: Vec<f64>,
    /// `‖f − Âu‖ / ‖f‖`.
    pub residual: f64,
}

pub fn direct_solve(a: &CsrMatrix, f: &[f64]) -> Result<DirectSolution> {
    let chol = SparseCholesky::new(a).map_err(|e| {
        Error::NotPositiveDefinite(format!(
            "global matrix is not positive definite ({e}); penalty too small?"
        ))
    })?;
    let u = chol.solve(f);
    let au = a.mul_vec(&u);
    let r: Vec<f64> = f.iter().zip(&au).map(|(x, y)| x - y).collect();
    let fn2 = norm2(f);
    Ok(DirectSolution {
        residual: if fn2 > 0.0 {
            norm2(&r) / fn2
        } else {
            norm2(&r)
        },
        u,
    })
}

/// Eigenvalues of a symmetric dense matrix with the eigen-residual check.
#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// `max_k ‖Av_k − λ_k v_k‖ / ‖A‖_max`.
    pub residual: f64,
}

impl Spectrum {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NAN)
    }

    pub fn condition(&self) -> f64 {
        self.max() / self.min()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,eigenvalue")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(out, "{k},{v:e}")?;
        }
        Ok(())
    }
}

fn spectrum_of(a: &Mat<f64>) -> Result<Spectrum> {
    let (values, _, res) = symmetric_eigen(a)?;
    let scale = dense_max_abs(a).max(f64::MIN_POSITIVE);
    Ok(Spectrum {
        values,
        residual: res / scale,
    })
}

fn symmetrize(a: &mut Mat<f64>) {
    for r in 0..a.nrows() {
        for c in 0..r {
            let v = 0.5 * (a[(r, c)] + a[(c, r)]);
            a[(r, c)] = v;
            a[(c, r)] = v;
        }
    }
}

/// Dense `F`, `M⁻¹` and the spectrum of `M⁻¹F` through
/// `chol(M⁻¹) = LLᵀ`, `eig(LᵀFL)`.
pub struct DenseDual {
    pub f: Mat<f64>,
    pub m_inv: Mat<f64>,
    pub spectrum: Spectrum,
    /// Largest entry of `F − Fᵀ` relative to `max|F|`.
    pub f_asymmetry: f64,
}

pub fn dense_spectrum(feti: &FetiDp) -> Result<DenseDual> {
    let n = feti.n_multipliers();
    let f = dense_from_operator(n, |e| feti.apply_f(e));
    let m_inv = dense_from_operator(n, |e| feti.apply_m_inv(e));
    let mut asym = 0.0f64;
    for r in 0..n {
        for c in 0..r {
            asym = asym.max((f[(r, c)] - f[(c, r)]).abs());
        }
    }
    let f_asymmetry = asym / dense_max_abs(&f).max(f64::MIN_POSITIVE);
    let mut ms = m_inv.clone();
    symmetrize(&mut ms);
    let l = DenseCholesky::new(&ms)?.factor_l();
    let mut fs = f.clone();
    symmetrize(&mut fs);
    let mut k = l.transpose() * &fs * &l;
    symmetrize(&mut k);
    Ok(DenseDual {
        spectrum: spectrum_of(&k)?,
        f,
        m_inv,
        f_asymmetry,
    })
}

/// Dense `P_Δ` on the concatenated dual dofs and the largest distance of
/// its eigenvalues from `{0, 1}`.
pub fn projection_spectrum(feti: &FetiDp) -> Result<f64> {
    let lens: Vec<usize> = feti
        .problem
        .maps
        .spaces
        .iter()
        .map(|s| s.delta.len())
        .collect();
    let n: usize = lens.iter().sum();
    let split = |x: &[f64]| {
        let mut out = Vec::with_capacity(lens.len());
        let mut at = 0;
        for &l in &lens {
            out.push(x[at..at + l].to_vec());
            at += l;
        }
        out
    };
    let p = dense_from_operator(n, |e| feti.apply_p(&split(e)).concat());
    let ev = general_eigenvalues(&p)?;
    Ok(ev
        .iter()
        .map(|&(re, im)| (re.abs().min((re - 1.0).abs())).hypot(im))
        .fold(0.0, f64::max))
}

/// `W̃` with every non-primal dof independent and every primal group
/// assembled, and the dense `Ã` on it.
pub struct TildeSpace {
    pub n: usize,
    /// Index in `W̃` of each local dof.
    pub map: Vec<Vec<usize>>,
    /// Indices of the dual dofs, in the concatenated local order.
    pub delta: Vec<usize>,
    /// Indices of interior and primal dofs.
    pub eliminated: Vec<usize>,
    pub a: Mat<f64>,
}

pub fn dense_tilde(feti: &FetiDp) -> TildeSpace {
    let maps = &feti.problem.maps;
    let mut map: Vec<Vec<usize>> = maps
        .spaces
        .iter()
        .map(|s| vec![usize::MAX; s.len()])
        .collect();
    let mut next = 0;
    let mut delta = Vec::new();
    let mut eliminated = Vec::new();
    for (i, s) in maps.spaces.iter().enumerate() {
        for &k in &s.interior {
            map[i][k] = next;
            eliminated.push(next);
            next += 1;
        }
        for &k in &s.delta {
            map[i][k] = next;
            delta.push(next);
            next += 1;
        }
    }
    for g in 0..maps.n_primal() {
        eliminated.push(next + g);
    }
    for (i, s) in maps.spaces.iter().enumerate() {
        for (&k, &g) in s.primal.iter().zip(&maps.primal_of[i]) {
            map[i][k] = next + g;
        }
    }
    let n = next + maps.n_primal();
    let mut a = Mat::<f64>::zeros(n, n);
    for (i, l) in feti.problem.locals.iter().enumerate() {
        for r in 0..l.matrix.nrows() {
            for (c, v) in l.matrix.row(r) {
                a[(map[i][r], map[i][c])] += v;
            }
        }
    }
    TildeSpace {
        n,
        map,
        delta,
        eliminated,
        a,
    }
}

/// Comparison of the operator `S̃` with the dense Schur complement of `Ã`.
#[derive(Debug, Clone, Serialize)]
pub struct TildeCheck {
    /// `max|S̃_op − S̃_dense| / max|S̃_dense|`.
    pub schur_error: f64,
    /// Relative error of `S̃⁻¹` and `F` applied to random vectors.
    pub inverse_error: f64,
    pub f_error: f64,
}

pub fn check_tilde(feti: &FetiDp, samples: usize, seed: u64) -> Result<TildeCheck> {
    let ts = dense_tilde(feti);
    let s_dense = dense_schur(&ts.a, &ts.delta, &ts.eliminated)?;
    let lens: Vec<usize> = feti
        .problem
        .maps
        .spaces
        .iter()
        .map(|s| s.delta.len())
        .collect();
    let split = |x: &[f64]| {
        let mut out = Vec::with_capacity(lens.len());
        let mut at = 0;
        for &l in &lens {
            out.push(x[at..at + l].to_vec());
            at += l;
        }
        out
    };
    let nd = ts.delta.len();
    if nd == 0 {
        return Err(Error::InvalidConfig(
            "no dual dofs; the check needs m >= 2".into(),
        ));
    }
    let s_op = dense_from_operator(nd, |e| feti.apply_s_tilde(&split(e)).concat());
    let mut diff = 0.0f64;
    for r in 0..nd {
        for c in 0..nd {
            diff = diff.max((s_op[(r, c)] - s_dense[(r, c)]).abs());
        }
    }
    let schur_error = diff / dense_max_abs(&s_dense).max(f64::MIN_POSITIVE);
    let mut sym = s_dense.clone();
    symmetrize(&mut sym);
    let chol = DenseCholesky::new(&sym)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut inverse_error, mut f_error) = (0.0f64, 0.0f64);
    let rel = |a: &[f64], b: &[f64]| {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm2(&d) / norm2(b).max(f64::MIN_POSITIVE)
    };
    for _ in 0..samples {
        let r: Vec<f64> = (0..nd).map(|_| rng.random_range(-1.0..1.0)).collect();
        let op = feti.apply_s_tilde_inv(&split(&r)).concat();
        let mut dense = r.clone();
        chol.solve_in_place(&mut dense);
        inverse_error = inverse_error.max(rel(&op, &dense));
        let lam: Vec<f64> = (0..feti.n_multipliers())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let mut x = feti.jump.apply_t(&lam).concat();
        chol.solve_in_place(&mut x);
        let dense_f = feti.jump.apply(&split(&x));
        f_error = f_error.max(rel(&feti.apply_f(&lam), &dense_f));
    }
    Ok(TildeCheck {
        schur_error,
        inverse_error,
        f_error,
    })
}

/// Solves `Ŝ u_Γ = ĝ_Γ` with the dense assembled Schur complement and
/// compares with the direct solution on `Γ`. Returns the relative
/// difference.
pub fn schur_path_error(feti: &FetiDp) -> Result<f64> {
    let problem = feti.problem;
    let maps = &problem.maps;
    let mut gamma_index = vec![usize::MAX; maps.n_global];
    let mut gamma = Vec::new();
    for (i, s) in maps.spaces.iter().enumerate() {
        for k in 0..s.n_own {
            if matches!(s.dofs[k].class, DofClass::GammaOwn | DofClass::CornerOwn) {
                let g = maps.global_of(i, k);
                gamma_index[g] = gamma.len();
                gamma.push(g);
            }
        }
    }
    let ng = gamma.len();
    let mut s_hat = Mat::<f64>::zeros(ng, ng);
    let mut g_hat = vec![0.0; ng];
    for (i, ls) in feti.schur.iter().enumerate() {
        let s = &maps.spaces[i];
        let a = &problem.locals[i].matrix;
        let f = &problem.locals[i].load;
        let idx: Vec<usize> = s
            .gamma_prime
            .iter()
            .map(|&k| gamma_index[maps.global_of(i, k)])
            .collect();
        let sd = ls.full.dense();
        for (r, &gr) in idx.iter().enumerate() {
            for (c, &gc) in idx.iter().enumerate() {
                s_hat[(gr, gc)] += sd[(r, c)];
            }
        }
        let f_i: Vec<f64> = s.interior.iter().map(|&k| f[k]).collect();
        let w = ls.factor.solve(&f_i);
        let corr = a.submatrix(&s.gamma_prime, &s.interior).mul_vec(&w);
        for ((&k, &g), c) in s.gamma_prime.iter().zip(&idx).zip(&corr) {
            g_hat[g] += f[k] - c;
        }
    }
    symmetrize(&mut s_hat);
    DenseCholesky::new(&s_hat)?.solve_in_place(&mut g_hat);
    let (a, f) = problem.assemble_global();
    let direct = direct_solve(&a, &f)?;
    let reference: Vec<f64> = gamma.iter().map(|&g| direct.u[g]).collect();
    let d: Vec<f64> = g_hat.iter().zip(&reference).map(|(x, y)| x - y).collect();
    Ok(norm2(&d) / norm2(&reference).max(f64::MIN_POSITIVE))
}

/// Everything the dense oracles produce for one small instance.
pub struct OracleReport {
    pub a: Mat<f64>,
    pub dual: DenseDual,
    pub direct: DirectSolution,
    /// Relative `ℓ²` difference between the FETI-DP and direct solutions.
    pub solution_error: f64,
    /// Largest entry of `B_Δ u_Δ` relative to `max|u|`.
    pub jump: f64,
}

impl OracleReport {
    pub fn build(feti: &FetiDp) -> Result<Self> {
        let (a_sparse, f) = feti.problem.assemble_global();
        let direct = direct_solve(&a_sparse, &f)?;
        let dual = dense_spectrum(feti)?;
        let g = feti.dual_rhs();
        let mut chol_f = dual.f.clone();
        symmetrize(&mut chol_f);
        let mut lambda = g.clone();
        DenseCholesky::new(&chol_f)?.solve_in_place(&mut lambda);
        let rec = feti.recover_solution(&lambda);
        let d: Vec<f64> = rec
            .global
            .iter()
            .zip(&direct.u)
            .map(|(x, y)| x - y)
            .collect();
        Ok(Self {
            a: a_sparse.to_dense(),
            solution_error: norm2(&d) / norm2(&direct.u).max(f64::MIN_POSITIVE),
            jump: max_abs(&rec.jump) / max_abs(&rec.global).max(f64::MIN_POSITIVE),
            dual,
            direct,
        })
    }

    /// `max|Âu − f| / max|f|` with the dense matrix.
    pub fn dense_residual(&self, f: &[f64]) -> f64 {
        let au = dense_mul_vec(&self.a, &self.direct.u);
        let r: Vec<f64> = au.iter().zip(f).map(|(x, y)| x - y).collect();
        max_abs(&r) / max_abs(f).max(f64::MIN_POSITIVE)
    }
}

/// `L²` errors against `sin(πx) sin(πy)` for each `m`, solved by FETI-DP
/// with `ρ ≡ 1`.
pub fn mms_errors(n: usize, ms: &[usize], delta: f64) -> Result<Vec<(usize, f64)>> {
    use std::f64::consts::PI;
    ms.iter()
        .map(|&m| {
            let mut cfg = ExperimentConfig::new(n, m, CoefficientField::Constant(1.0));
            cfg.delta = delta;
            cfg.load = LoadFunction::SinSin;
            let out = run_case_full(&cfg)?;
            let problem = crate::problem::Problem::build(cfg.problem_config())?;
            let err = l2_error(
                &problem.meshes,
                &problem.maps.own_offset,
                &out.solution,
                |x, y| (PI * x).sin() * (PI * y).sin(),
            );
            Ok((m, err))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Problem, ProblemConfig};

    fn problem(n: usize, m: usize, rho: CoefficientField) -> Problem {
        Problem::build(ProblemConfig::new(n, m, rho)).unwrap()
    }

    #[test]
    fn oracle_on_small_instance() {
        let p = problem(2, 2, CoefficientField::Constant(1.0));
        let feti = FetiDp::new(&p, 1.0).unwrap();
        let rep = OracleReport::build(&feti).unwrap();
        assert!(rep.direct.residual < 1e-12);
        assert!(rep.solution_error < 1e-8);
        assert!(rep.dual.spectrum.residual < 1e-10);
        assert!(rep.dual.spectrum.min() > 1.0 - 1e-8);
        assert!(rep.dual.f_asymmetry < 1e-10);
        let (_, f) = p.assemble_global();
        assert!(rep.dense_residual(&f) < 1e-12);
    }

    #[test]
    fn projection_has_zero_one_spectrum() {
        let p = problem(
            2,
            2,
            CoefficientField::Checkerboard {
                black: 1.0,
                red: 100.0,
            },
        );
        let feti = FetiDp::new(&p, 1.0).unwrap();
        assert!(projection_spectrum(&feti).unwrap() < 1e-10);
    }

    #[test]
    fn tilde_operator_matches_dense_elimination() {
        let p = problem(
            2,
            2,
            CoefficientField::Checkerboard {
                black: 1.0,
                red: 10.0,
            },
        );
        let feti = FetiDp::new(&p, 1.0).unwrap();
        let chk = check_tilde(&feti, 5, 3).unwrap();
        assert!(chk.schur_error < 1e-11, "{chk:?}");
        assert!(chk.inverse_error < 1e-11 && chk.f_error < 1e-11);
    }

    #[test]
    fn schur_path_matches_direct() {
        let p = problem(
            2,
            2,
            CoefficientField::Checkerboard {
                black: 1.0,
                red: 10.0,
            },
        );
        let feti = FetiDp::new(&p, 1.0).unwrap();
        assert!(schur_path_error(&feti).unwrap() < 1e-10);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut b = crate::linalg::TripletBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(0, 1, 1.0);
        b.push(1, 0, 1.0);
        b.push(1, 1, 1.0);
        assert!(direct_solve(&b.build(), &[1.0, 1.0]).is_err());
    }
}
