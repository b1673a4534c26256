//! Preconditioned conjugate gradients with Lanczos spectrum estimates.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PcgConfig {
    /// Relative reduction of the residual norm.
    pub tol: f64,
    pub max_iters: usize,
    pub estimate_condition: bool,
    /// Stop on the preconditioned residual `sqrt(⟨r, M⁻¹r⟩)` instead of `‖r‖₂`.
    pub preconditioned_stop: bool,
}

impl Default for PcgConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 1000,
            estimate_condition: true,
            preconditioned_stop: false,
        }
    }
}

impl PcgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must lie in (0, 1), got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig(
                "max iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PcgReport {
    pub iterations: usize,
    pub converged: bool,
    /// `‖g − Fλ_k‖₂` for `k = 0..=iterations`.
    pub residuals: Vec<f64>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub condition: f64,
    /// Set when fewer than two iterations were available for the estimate.
    pub degenerate: bool,
    /// Set when `⟨r, M⁻¹r⟩ ≤ 0` stopped the iteration.
    pub breakdown: bool,
}

impl PcgReport {
    pub fn relative_residual(&self) -> f64 {
        match (self.residuals.first(), self.residuals.last()) {
            (Some(&r0), Some(&rk)) if r0 > 0.0 => rk / r0,
            _ => 0.0,
        }
    }

    /// Writes `iteration,residual,cond` rows, the estimate taken from the
    /// leading Lanczos block of each step.
    pub fn write_history_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,residual,cond")?;
        for (k, r) in self.residuals.iter().enumerate() {
            let cond = if k == 0 {
                f64::NAN
            } else {
                let (d, e) =
                    lanczos_tridiagonal(&self.alphas[..k], &self.betas[..k.saturating_sub(1)]);
                let ev = tridiagonal_eigenvalues(&d, &e);
                ev[ev.len() - 1] / ev[0]
            };
            writeln!(out, "{k},{r:e},{cond}")?;
        }
        Ok(())
    }
}

/// Solves `F λ = g` from `λ = 0`.
pub fn pcg<F, M>(
    apply_f: F,
    apply_m_inv: M,
    g: &[f64],
    config: &PcgConfig,
) -> Result<(Vec<f64>, PcgReport)>
where
    F: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
{
    config.validate()?;
    let n = g.len();
    let mut lambda = vec![0.0; n];
    let mut report = PcgReport {
        lambda_min: 1.0,
        lambda_max: 1.0,
        condition: 1.0,
        ..Default::default()
    };
    let g_norm = norm2(g);
    report.residuals.push(g_norm);
    if g_norm == 0.0 {
        report.converged = true;
        report.degenerate = true;
        return Ok((lambda, report));
    }
    let mut r = g.to_vec();
    let mut z = apply_m_inv(&r);
    let mut rz = dot(&r, &z);
    let stop_ref = if config.preconditioned_stop {
        rz.max(0.0).sqrt()
    } else {
        g_norm
    };
    let mut p = z.clone();
    for _ in 0..config.max_iters {
        if rz <= 0.0 {
            report.breakdown = true;
            break;
        }
        let q = apply_f(&p);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            report.breakdown = true;
            break;
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut lambda);
        axpy(-alpha, &q, &mut r);
        report.alphas.push(alpha);
        report.iterations += 1;
        let r_norm = norm2(&r);
        report.residuals.push(r_norm);
        z = apply_m_inv(&r);
        let rz_new = dot(&r, &z);
        let measure = if config.preconditioned_stop {
            rz_new.max(0.0).sqrt()
        } else {
            r_norm
        };
        if measure <= config.tol * stop_ref {
            report.converged = true;
            break;
        }
        let beta = rz_new / rz;
        report.betas.push(beta);
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    if config.estimate_condition {
        let (lmin, lmax, kappa, degenerate) = lanczos_condition(&report);
        report.lambda_min = lmin;
        report.lambda_max = lmax;
        report.condition = kappa;
        report.degenerate = degenerate;
    }
    Ok((lambda, report))
}

/// Diagonal and off-diagonal of the Lanczos matrix built from CG
/// coefficients.
pub fn lanczos_tridiagonal(alphas: &[f64], betas: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = alphas.len();
    let mut d = Vec::with_capacity(k);
    let mut e = Vec::with_capacity(k.saturating_sub(1));
    for j in 0..k {
        let mut v = 1.0 / alphas[j];
        if j > 0 {
            v += betas[j - 1] / alphas[j - 1];
        }
        d.push(v);
        if j + 1 < k {
            e.push(betas[j].sqrt() / alphas[j]);
        }
    }
    (d, e)
}

/// Number of eigenvalues of the symmetric tridiagonal `(d, e)` below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for j in 0..d.len() {
        let off = if j == 0 { 0.0 } else { e[j - 1] * e[j - 1] };
        q = d[j] - x - if j == 0 { 0.0 } else { off / q };
        if q == 0.0 {
            q = f64::EPSILON * (d[j].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// All eigenvalues of a symmetric tridiagonal matrix, ascending, by
/// Sturm-sequence bisection.
pub fn tridiagonal_eigenvalues(d: &[f64], e: &[f64]) -> Vec<f64> {
    let n = d.len();
    if n == 0 {
        return Vec::new();
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for j in 0..n {
        let r = if j > 0 { e[j - 1].abs() } else { 0.0 } + if j + 1 < n { e[j].abs() } else { 0.0 };
        lo = lo.min(d[j] - r);
        hi = hi.max(d[j] + r);
    }
    let span = (hi - lo).max(hi.abs()).max(1e-300);
    (0..n)
        .map(|k| {
            let (mut a, mut b) = (lo - 1e-12 * span, hi + 1e-12 * span);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if sturm_count(d, e, mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// Extreme Ritz values and `κ = λ_max / λ_min` from a PCG run.
/// Returns `(λ_min, λ_max, κ, degenerate)`.
pub fn lanczos_condition(report: &PcgReport) -> (f64, f64, f64, bool) {
    let k = report.alphas.len();
    if k == 0 {
        return (1.0, 1.0, 1.0, true);
    }
    let (d, e) = lanczos_tridiagonal(
        &report.alphas,
        &report.betas[..k.saturating_sub(1).min(report.betas.len())],
    );
    let ev = tridiagonal_eigenvalues(&d, &e);
    let lmin = ev[0];
    let lmax = ev[ev.len() - 1];
    if k == 1 {
        return (lmin, lmax, 1.0, true);
    }
    (lmin, lmax, lmax / lmin, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_op(d: Vec<f64>) -> impl Fn(&[f64]) -> Vec<f64> {
        move |x: &[f64]| x.iter().zip(&d).map(|(a, b)| a * b).collect()
    }

    #[test]
    fn identity_converges_in_one_step() {
        let g = vec![1.0, 2.0, 3.0];
        let id = |x: &[f64]| x.to_vec();
        let (x, rep) = pcg(id, id, &g, &PcgConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged && rep.degenerate);
        assert_eq!(rep.condition, 1.0);
        assert_eq!(x, g);
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let id = |x: &[f64]| x.to_vec();
        let (x, rep) = pcg(id, id, &[0.0; 4], &PcgConfig::default()).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ritz_values_match_spectrum() {
        let spec: Vec<f64> = (0..30).map(|k| 1.0 + k as f64 * 0.5).collect();
        let g: Vec<f64> = (0..30).map(|k| 1.0 + (k as f64).cos()).collect();
        let (_, rep) = pcg(
            diag_op(spec),
            |x: &[f64]| x.to_vec(),
            &g,
            &PcgConfig::default(),
        )
        .unwrap();
        assert!(rep.converged);
        assert!((rep.lambda_min - 1.0).abs() < 1e-6);
        assert!((rep.lambda_max - 15.5).abs() < 1e-6);
        assert!((rep.condition - 15.5).abs() < 1e-5);
    }

    #[test]
    fn bisection_on_known_matrix() {
        // 1D Laplacian eigenvalues 2 − 2 cos(kπ/(n+1))
        let n = 12;
        let ev = tridiagonal_eigenvalues(&vec![2.0; n], &vec![-1.0; n - 1]);
        for (k, v) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn history_csv_has_one_line_per_residual() {
        let spec: Vec<f64> = (0..5).map(|k| 1.0 + k as f64).collect();
        let (_, rep) = pcg(
            diag_op(spec),
            |x: &[f64]| x.to_vec(),
            &[1.0; 5],
            &PcgConfig::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        rep.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), rep.residuals.len() + 1);
    }

    #[test]
    fn bad_config_rejected() {
        let id = |x: &[f64]| x.to_vec();
        let cfg = PcgConfig {
            tol: 2.0,
            ..Default::default()
        };
        assert!(pcg(id, id, &[1.0], &cfg).is_err());
    }
}
