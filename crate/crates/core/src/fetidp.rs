//! The dual-primal system: jump operator, scaling, the subassembled solve
//! behind `S̃⁻¹`, the dual operator `F`, the Dirichlet preconditioner and
//! recovery of the primal solution.
//!
//! Local work is fanned out over subdomains with rayon; partial results are
//! always reduced in subdomain order so runs are bitwise reproducible.

use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::dofs::{DofKind, SpaceMaps};
use crate::error::{check_len, Error, Result};
use crate::linalg::{CsrMatrix, DenseCholesky, SparseCholesky, TripletBuilder};
use crate::problem::Problem;
use crate::subdomain::LocalSchur;

/// Signed jump operator `B_Δ`, stored per subdomain as a row index and sign
/// for every dual dof.
#[derive(Debug, Clone)]
pub struct JumpMatrix {
    pub rows: usize,
    /// Per subdomain: `(row, sign)` for each entry of `delta`.
    pub entries: Vec<Vec<(usize, f64)>>,
}

impl JumpMatrix {
    pub fn new(maps: &SpaceMaps) -> Self {
        let entries = maps
            .delta_row
            .iter()
            .zip(&maps.delta_sign)
            .map(|(r, s)| r.iter().copied().zip(s.iter().copied()).collect())
            .collect();
        Self {
            rows: maps.n_multipliers(),
            entries,
        }
    }

    /// Total number of dual dofs `Σ_i |Δ_i|`.
    pub fn cols(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    /// `B_Δ u_Δ` with `u_Δ` given per subdomain.
    pub fn apply(&self, u: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (ent, ui) in self.entries.iter().zip(u) {
            for (&(r, s), &v) in ent.iter().zip(ui) {
                out[r] += s * v;
            }
        }
        out
    }

    /// `B_Δᵀ λ` per subdomain.
    pub fn apply_t(&self, lambda: &[f64]) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|ent| ent.iter().map(|&(r, s)| s * lambda[r]).collect())
            .collect()
    }

    /// Explicit sparse matrix over the concatenated dual dofs.
    pub fn to_csr(&self) -> CsrMatrix {
        let mut b = TripletBuilder::new(self.rows, self.cols());
        let mut col = 0;
        for ent in &self.entries {
            for &(r, s) in ent {
                b.push(r, col, s);
                col += 1;
            }
        }
        b.build()
    }
}

/// Scaling weights `D^{(i)}_Δ = ρ_j^β / (ρ_i^β + ρ_j^β)`.
#[derive(Debug, Clone)]
pub struct ScalingWeights {
    pub beta: f64,
    pub weights: Vec<Vec<f64>>,
}

/// `ρ_o^β / (ρ_s^β + ρ_o^β)` evaluated without forming the powers.
pub fn scaling_weight(rho_self: f64, rho_other: f64, beta: f64) -> f64 {
    1.0 / (1.0 + (rho_self / rho_other).powf(beta))
}

impl ScalingWeights {
    pub fn new(maps: &SpaceMaps, rho: &[f64], beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "scaling exponent must be positive, got {beta}"
            )));
        }
        let weights = maps
            .delta_row
            .iter()
            .enumerate()
            .map(|(i, rows)| {
                rows.iter()
                    .map(|&r| {
                        let mult = &maps.multipliers[r];
                        let other = if mult.own.0 == i {
                            mult.trace.0
                        } else {
                            mult.own.0
                        };
                        scaling_weight(rho[i], rho[other], beta)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { beta, weights })
    }
}

/// Per-subdomain part of a subassembled solve.
#[derive(Debug)]
struct TildeLocal {
    /// Local dofs eliminated locally (`I` or `I ∪ Δ`).
    r: Vec<usize>,
    chol: SparseCholesky,
    /// `K_rr⁻¹ K_rΠ`, column-major `|r| × |Π_i|`.
    phi: Vec<f64>,
    /// Local primal dofs and their primal unknowns.
    primal: Vec<usize>,
    groups: Vec<usize>,
}

/// Solver for the subassembled matrix `Ã`, coupled only through the primal
/// unknowns. With `with_delta = false` it solves the `(I, Π)` block instead.
#[derive(Debug)]
pub struct TildeSolver {
    locals: Vec<TildeLocal>,
    coarse: DenseCholesky,
    n_primal: usize,
    sizes: Vec<usize>,
}

impl TildeSolver {
    pub fn new(problem: &Problem, with_delta: bool) -> Result<Self> {
        let maps = &problem.maps;
        let n_primal = maps.n_primal();
        let built = (0..problem.subdomains())
            .into_par_iter()
            .map(|i| -> Result<(TildeLocal, Mat<f64>)> {
                let s = &maps.spaces[i];
                let a = &problem.locals[i].matrix;
                let mut r = s.interior.clone();
                if with_delta {
                    r.extend_from_slice(&s.delta);
                    r.sort_unstable();
                }
                let chol = SparseCholesky::new(&a.submatrix(&r, &r)).map_err(|e| {
                    Error::InvalidConfig(format!("local block of subdomain {i} is singular ({e})"))
                })?;
                let np = s.primal.len();
                let nr = r.len();
                let k_rp = a.submatrix(&r, &s.primal);
                let mut phi = vec![0.0; nr * np];
                for row in 0..nr {
                    for (c, v) in k_rp.row(row) {
                        phi[c * nr + row] = v;
                    }
                }
                chol.solve_columns_in_place(&mut phi, np);
                let k_pp = a.submatrix(&s.primal, &s.primal);
                let k_pr = a.submatrix(&s.primal, &r);
                let mut sc = k_pp.to_dense();
                for c in 0..np {
                    let col = k_pr.mul_vec(&phi[c * nr..(c + 1) * nr]);
                    for (rr, v) in col.iter().enumerate() {
                        sc[(rr, c)] -= v;
                    }
                }
                Ok((
                    TildeLocal {
                        r,
                        chol,
                        phi,
                        primal: s.primal.clone(),
                        groups: maps.primal_of[i].clone(),
                    },
                    sc,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut coarse = Mat::<f64>::zeros(n_primal, n_primal);
        let mut locals = Vec::with_capacity(built.len());
        for (loc, sc) in built {
            for (a, &ga) in loc.groups.iter().enumerate() {
                for (b, &gb) in loc.groups.iter().enumerate() {
                    coarse[(ga, gb)] += sc[(a, b)];
                }
            }
            locals.push(loc);
        }
        // symmetrize against round-off in the local condensations
        for a in 0..n_primal {
            for b in 0..a {
                let v = 0.5 * (coarse[(a, b)] + coarse[(b, a)]);
                coarse[(a, b)] = v;
                coarse[(b, a)] = v;
            }
        }
        let coarse = DenseCholesky::new(&coarse)
            .map_err(|e| Error::NotPositiveDefinite(format!("coarse primal problem ({e})")))?;
        let sizes = maps.spaces.iter().map(|s| s.len()).collect();
        Ok(Self {
            locals,
            coarse,
            n_primal,
            sizes,
        })
    }

    pub fn n_primal(&self) -> usize {
        self.n_primal
    }

    /// Solves with a right-hand side given as local vectors on `W_i(Ω'_i)`;
    /// primal entries are summed over their group. Entries outside the
    /// solver's dof set are ignored and returned as zero.
    pub fn solve(&self, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let partial: Vec<(Vec<f64>, Vec<f64>)> = self
            .locals
            .par_iter()
            .zip(rhs.par_iter())
            .map(|(loc, f)| {
                let nr = loc.r.len();
                let mut y: Vec<f64> = loc.r.iter().map(|&k| f[k]).collect();
                loc.chol.solve_in_place(&mut y);
                let g: Vec<f64> = loc
                    .primal
                    .iter()
                    .enumerate()
                    .map(|(c, &k)| {
                        let col = &loc.phi[c * nr..(c + 1) * nr];
                        let proj: f64 = loc.r.iter().zip(col).map(|(&kr, p)| p * f[kr]).sum();
                        f[k] - proj
                    })
                    .collect();
                (y, g)
            })
            .collect();
        let mut g_pi = vec![0.0; self.n_primal];
        for (loc, (_, g)) in self.locals.iter().zip(&partial) {
            for (&grp, v) in loc.groups.iter().zip(g) {
                g_pi[grp] += v;
            }
        }
        self.coarse.solve_in_place(&mut g_pi);
        let u_pi = g_pi;
        self.locals
            .par_iter()
            .zip(partial.into_par_iter())
            .zip(self.sizes.par_iter())
            .map(|((loc, (mut y, _)), &n)| {
                let nr = loc.r.len();
                for (c, &grp) in loc.groups.iter().enumerate() {
                    let up = u_pi[grp];
                    if up != 0.0 {
                        for (yv, p) in y.iter_mut().zip(&loc.phi[c * nr..(c + 1) * nr]) {
                            *yv -= p * up;
                        }
                    }
                }
                let mut u = vec![0.0; n];
                for (&k, v) in loc.r.iter().zip(y) {
                    u[k] = v;
                }
                for (&k, &grp) in loc.primal.iter().zip(&loc.groups) {
                    u[k] = u_pi[grp];
                }
                u
            })
            .collect()
    }
}

/// Dimensions and setup data of an assembled dual system.
#[derive(Debug, Clone, Serialize)]
pub struct DualSizes {
    pub multipliers: usize,
    pub primal: usize,
    pub dual_dofs: usize,
}

/// The assembled FETI-DP dual system for one problem and scaling exponent.
pub struct FetiDp<'a> {
    pub problem: &'a Problem,
    pub jump: JumpMatrix,
    pub scaling: ScalingWeights,
    pub tilde: TildeSolver,
    pub primal_solver: TildeSolver,
    pub schur: Vec<LocalSchur>,
}

impl<'a> FetiDp<'a> {
    pub fn new(problem: &'a Problem, beta: f64) -> Result<Self> {
        let maps = &problem.maps;
        let scaling = ScalingWeights::new(maps, &problem.rho, beta)?;
        let jump = JumpMatrix::new(maps);
        let tilde = TildeSolver::new(problem, true)?;
        let primal_solver = TildeSolver::new(problem, false)?;
        let schur = (0..problem.subdomains())
            .into_par_iter()
            .map(|i| {
                let s = &maps.spaces[i];
                LocalSchur::new(
                    i,
                    &problem.locals[i].matrix,
                    &s.interior,
                    &s.gamma_prime,
                    &s.delta,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            problem,
            jump,
            scaling,
            tilde,
            primal_solver,
            schur,
        })
    }

    pub fn sizes(&self) -> DualSizes {
        DualSizes {
            multipliers: self.jump.rows,
            primal: self.tilde.n_primal(),
            dual_dofs: self.jump.cols(),
        }
    }

    pub fn n_multipliers(&self) -> usize {
        self.jump.rows
    }

    fn delta_lists(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.problem.maps.spaces.iter().map(|s| &s.delta)
    }

    /// Embeds per-subdomain dual values into full local vectors.
    pub fn embed_delta(&self, u_delta: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.problem
            .maps
            .spaces
            .iter()
            .zip(u_delta)
            .map(|(s, ud)| {
                let mut v = vec![0.0; s.len()];
                for (&k, &x) in s.delta.iter().zip(ud) {
                    v[k] = x;
                }
                v
            })
            .collect()
    }

    pub fn extract_delta(&self, full: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.delta_lists()
            .zip(full)
            .map(|(d, u)| d.iter().map(|&k| u[k]).collect())
            .collect()
    }

    /// `S̃⁻¹ r_Δ`.
    pub fn apply_s_tilde_inv(&self, r_delta: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let u = self.tilde.solve(&self.embed_delta(r_delta));
        self.extract_delta(&u)
    }

    /// `S̃ u_Δ` through the `(I, Π)` block solve.
    pub fn apply_s_tilde(&self, u_delta: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let x = self.embed_delta(u_delta);
        let rhs: Vec<Vec<f64>> = x
            .par_iter()
            .zip(&self.problem.locals)
            .map(|(xi, l)| l.matrix.mul_vec(xi).into_iter().map(|v| -v).collect())
            .collect();
        let w = self.primal_solver.solve(&rhs);
        let z: Vec<Vec<f64>> = w
            .par_iter()
            .zip(x.par_iter())
            .zip(&self.problem.locals)
            .map(|((wi, xi), l)| {
                let sum: Vec<f64> = wi.iter().zip(xi).map(|(a, b)| a + b).collect();
                l.matrix.mul_vec(&sum)
            })
            .collect();
        self.extract_delta(&z)
    }

    /// `F λ = B_Δ S̃⁻¹ B_Δᵀ λ`.
    pub fn apply_f(&self, lambda: &[f64]) -> Vec<f64> {
        let r = self.jump.apply_t(lambda);
        let u = self.apply_s_tilde_inv(&r);
        self.jump.apply(&u)
    }

    pub fn try_apply_f(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        check_len(self.jump.rows, lambda.len())?;
        Ok(self.apply_f(lambda))
    }

    /// `M⁻¹ μ = Σ_i B^{(i)} D^{(i)} S'_{i,Δ} D^{(i)} B^{(i)ᵀ} μ`.
    pub fn apply_m_inv(&self, mu: &[f64]) -> Vec<f64> {
        let parts: Vec<Vec<f64>> = self
            .jump
            .entries
            .par_iter()
            .zip(&self.scaling.weights)
            .zip(&self.schur)
            .map(|((ent, d), ls)| {
                let v: Vec<f64> = ent
                    .iter()
                    .zip(d)
                    .map(|(&(r, s), &w)| s * w * mu[r])
                    .collect();
                let sv = ls.delta.apply(&v);
                sv.iter().zip(d).map(|(x, w)| x * w).collect()
            })
            .collect();
        let mut out = vec![0.0; self.jump.rows];
        for (ent, p) in self.jump.entries.iter().zip(&parts) {
            for (&(r, s), &x) in ent.iter().zip(p) {
                out[r] += s * x;
            }
        }
        out
    }

    /// `P_Δ w = B_{D,Δ}ᵀ B_Δ w`.
    pub fn apply_p(&self, w: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let bw = self.jump.apply(w);
        self.jump
            .entries
            .iter()
            .zip(&self.scaling.weights)
            .map(|(ent, d)| {
                ent.iter()
                    .zip(d)
                    .map(|(&(r, s), &x)| x * s * bw[r])
                    .collect()
            })
            .collect()
    }

    /// Applies the scaled transpose `B_{D,Δ}ᵀ μ`.
    pub fn apply_bd_t(&self, mu: &[f64]) -> Vec<Vec<f64>> {
        self.jump
            .entries
            .iter()
            .zip(&self.scaling.weights)
            .map(|(ent, d)| {
                ent.iter()
                    .zip(d)
                    .map(|(&(r, s), &x)| x * s * mu[r])
                    .collect()
            })
            .collect()
    }

    /// Loads as local vectors.
    pub fn local_loads(&self) -> Vec<Vec<f64>> {
        self.problem.locals.iter().map(|l| l.load.clone()).collect()
    }

    /// `g̃_Δ = f_Δ − A_{ΔI} u_I − A_{ΔΠ} u_Π` with `(u_I, u_Π)` solving the
    /// primal block against `(f_I, f_Π)`.
    pub fn g_tilde(&self) -> Vec<Vec<f64>> {
        let f = self.local_loads();
        let u = self.primal_solver.solve(&f);
        let fd = self.extract_delta(&f);
        let au: Vec<Vec<f64>> = u
            .par_iter()
            .zip(&self.problem.locals)
            .map(|(ui, l)| l.matrix.mul_vec(ui))
            .collect();
        let aud = self.extract_delta(&au);
        fd.iter()
            .zip(&aud)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect()
    }

    /// `g = B_Δ S̃⁻¹ g̃_Δ`, computed as the dual part of `Ã⁻¹ f`.
    pub fn dual_rhs(&self) -> Vec<f64> {
        let u = self.tilde.solve(&self.local_loads());
        self.jump.apply(&self.extract_delta(&u))
    }

    /// Local solution vectors `Ã⁻¹ (f − B_Δᵀ λ)`.
    pub fn recover_local(&self, lambda: &[f64]) -> Vec<Vec<f64>> {
        let bt = self.embed_delta(&self.jump.apply_t(lambda));
        let rhs: Vec<Vec<f64>> = self
            .problem
            .locals
            .iter()
            .zip(&bt)
            .map(|(l, b)| l.load.iter().zip(b).map(|(f, x)| f - x).collect())
            .collect();
        self.tilde.solve(&rhs)
    }

    /// Solution on `X(Ω)` from a dual solution: own values of every
    /// subdomain, with the jump `B_Δ u_Δ` returned alongside.
    pub fn recover_solution(&self, lambda: &[f64]) -> Recovered {
        let local = self.recover_local(lambda);
        let maps = &self.problem.maps;
        let mut u = vec![0.0; maps.n_global];
        for (i, ui) in local.iter().enumerate() {
            let off = maps.own_offset[i];
            let n_own = maps.spaces[i].n_own;
            u[off..off + n_own].copy_from_slice(&ui[..n_own]);
        }
        let jump = self.jump.apply(&self.extract_delta(&local));
        let mut trace_mismatch = 0.0f64;
        for (i, ui) in local.iter().enumerate() {
            for (k, d) in maps.spaces[i].dofs.iter().enumerate() {
                if let DofKind::Trace { .. } = d.kind {
                    trace_mismatch = trace_mismatch.max((ui[k] - u[maps.global_of(i, k)]).abs());
                }
            }
        }
        Recovered {
            global: u,
            local,
            jump,
            trace_mismatch,
        }
    }
}

/// Recovered primal solution.
#[derive(Debug, Clone)]
pub struct Recovered {
    pub global: Vec<f64>,
    pub local: Vec<Vec<f64>>,
    pub jump: Vec<f64>,
    /// Largest difference between a trace copy and its source value.
    pub trace_mismatch: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::CoefficientField;
    use crate::linalg::{dot, max_abs};
    use crate::problem::ProblemConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn weights_are_complementary() {
        assert_eq!(scaling_weight(1.0, 1.0, 3.0), 0.5);
        let a = scaling_weight(1e4, 1.0, 10.0);
        let b = scaling_weight(1.0, 1e4, 10.0);
        assert!((a + b - 1.0).abs() < 1e-15);
        assert!(a > 0.0 && b <= 1.0);
        let c = scaling_weight(1e3, 1.0, 1.0);
        assert!(c > 0.0 && c < 1.0);
    }

    #[test]
    fn operators_are_symmetric() {
        let p = Problem::build(ProblemConfig::new(
            3,
            2,
            CoefficientField::Checkerboard {
                black: 1.0,
                red: 100.0,
            },
        ))
        .unwrap();
        let fd = FetiDp::new(&p, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = fd.n_multipliers();
        for _ in 0..5 {
            let x = random(n, &mut rng);
            let y = random(n, &mut rng);
            let a = dot(&fd.apply_f(&x), &y);
            let b = dot(&x, &fd.apply_f(&y));
            assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
            let c = dot(&fd.apply_m_inv(&x), &y);
            let d = dot(&x, &fd.apply_m_inv(&y));
            assert!((c - d).abs() <= 1e-12 * c.abs().max(d.abs()));
        }
        assert!(max_abs(&fd.apply_f(&vec![0.0; n])) == 0.0);
    }

    #[test]
    fn s_tilde_round_trip() {
        let p = Problem::build(ProblemConfig::new(2, 2, CoefficientField::Constant(1.0))).unwrap();
        let fd = FetiDp::new(&p, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u: Vec<Vec<f64>> = p
            .maps
            .spaces
            .iter()
            .map(|s| random(s.delta.len(), &mut rng))
            .collect();
        let back = fd.apply_s_tilde_inv(&fd.apply_s_tilde(&u));
        for (a, b) in u.iter().zip(&back) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn projection_identities() {
        let p = Problem::build(ProblemConfig::new(
            3,
            2,
            CoefficientField::Checkerboard {
                black: 1.0,
                red: 1e3,
            },
        ))
        .unwrap();
        let fd = FetiDp::new(&p, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w: Vec<Vec<f64>> = p
            .maps
            .spaces
            .iter()
            .map(|s| random(s.delta.len(), &mut rng))
            .collect();
        let pw = fd.apply_p(&w);
        let bw = fd.jump.apply(&w);
        let bpw = fd.jump.apply(&pw);
        for (a, b) in bw.iter().zip(&bpw) {
            assert!((a - b).abs() < 1e-13);
        }
        let ppw = fd.apply_p(&pw);
        for (a, b) in pw.iter().flatten().zip(ppw.iter().flatten()) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
