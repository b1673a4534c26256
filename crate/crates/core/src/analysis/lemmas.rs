//! Sampled ratio checks of the norm equivalences behind the condition
//! number bound.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{CoefficientField, FormParts};
use crate::error::Result;
use crate::fetidp::FetiDp;
use crate::linalg::dot;
use crate::problem::{Problem, ProblemConfig};

use super::interp::{InterpolatorSet, Variant};

/// Whether a ratio is bounded above only or above and below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Bound {
    Upper,
    TwoSided,
}

/// Extremes of one sampled ratio at one mesh size.
#[derive(Debug, Clone, Serialize)]
pub struct RatioStats {
    pub m: usize,
    pub samples: usize,
    pub skipped: usize,
    pub min: f64,
    pub max: f64,
}

impl RatioStats {
    fn new(m: usize) -> Self {
        Self {
            m,
            samples: 0,
            skipped: 0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, num: f64, den: f64, scale: f64, guard: f64) {
        if den.abs() < guard * scale {
            self.skipped += 1;
            return;
        }
        let r = num / den;
        self.samples += 1;
        self.min = self.min.min(r);
        self.max = self.max.max(r);
    }

    fn merge(&mut self, other: &RatioStats) {
        self.samples += other.samples;
        self.skipped += other.skipped;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }
}

/// One ratio recorded across a sweep of `m`.
#[derive(Debug, Clone, Serialize)]
pub struct RatioSuite {
    pub name: String,
    pub bound: Bound,
    pub rows: Vec<RatioStats>,
}

impl RatioSuite {
    /// Largest relative growth of the recorded constants between successive
    /// rows: the maximum for upper bounds, and also the reciprocal minimum
    /// for two-sided ones.
    pub fn growth(&self) -> f64 {
        let mut g = f64::NEG_INFINITY;
        for w in self.rows.windows(2) {
            g = g.max(w[1].max / w[0].max - 1.0);
            if self.bound == Bound::TwoSided {
                g = g.max(w[0].min / w[1].min - 1.0);
            }
        }
        g
    }

    pub fn bounded(&self, limit: f64) -> bool {
        let positive = |r: &RatioStats| self.bound == Bound::Upper || r.min > 0.0;
        self.rows
            .iter()
            .all(|r| r.samples > 0 && r.max.is_finite() && positive(r))
            && self.growth() < limit
    }
}

/// Writes `suite,bound,m,samples,skipped,min,max` rows.
pub fn write_ratio_csv<W: Write>(suites: &[RatioSuite], mut out: W) -> Result<()> {
    writeln!(out, "suite,bound,m,samples,skipped,min,max")?;
    for s in suites {
        for r in &s.rows {
            writeln!(
                out,
                "{},{:?},{},{},{},{:e},{:e}",
                s.name, s.bound, r.m, r.samples, r.skipped, r.min, r.max
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaConfig {
    /// Subdomains per side of the test partition.
    pub n: usize,
    /// Substructures sampled at every `m`.
    pub subdomains: Vec<usize>,
    pub ms: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub zero_guard: f64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self {
            n: 3,
            subdomains: vec![0, 1, 4],
            ms: vec![2, 4, 8, 16],
            samples: 100,
            seed: 2024,
            zero_guard: 1e-13,
        }
    }
}

/// Random test function family: independent values, a smooth random field,
/// or the smooth field plus noise of size `1/m`.
fn sample_values(
    points: impl Iterator<Item = [f64; 2]>,
    family: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    use std::f64::consts::PI;
    let modes: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.0..2.0 * PI),
            ]
        })
        .collect();
    let smooth = |p: [f64; 2]| -> f64 {
        modes
            .iter()
            .map(|c| c[0] * (PI * (c[1] * p[0] + c[2] * p[1]) + c[3]).sin())
            .sum()
    };
    let noise = 1.0 / m as f64;
    points
        .map(|p| match family % 3 {
            0 => rng.random_range(-1.0..1.0),
            1 => smooth(p),
            _ => smooth(p) + noise * rng.random_range(-1.0..1.0),
        })
        .collect()
}

/// Names of the ratio suites in output order.
pub const SUITES: [(&str, Bound); 14] = [
    ("a_ref/a plain", Bound::TwoSided),
    ("a_ref/(a+p0) plain", Bound::Upper),
    ("p_ref/(p+a) plain", Bound::Upper),
    ("p/(p_ref+a_ref) plain", Bound::Upper),
    ("d_ref(H_ref)/d(H') plain", Bound::TwoSided),
    ("a_ref/a edge", Bound::TwoSided),
    ("a_ref/(a+p0) edge", Bound::Upper),
    ("p_ref/(p+a) edge", Bound::Upper),
    ("p/(p_ref+a_ref) edge", Bound::Upper),
    ("d_ref(H_ref)/d(H') edge", Bound::TwoSided),
    ("gap_ref/gap edge", Bound::TwoSided),
    ("a(I u_ref)/a_ref(u_ref)", Bound::Upper),
    ("p(I u_ref)/p_ref(u_ref)", Bound::Upper),
    ("d(I u_ref)/d_ref(u_ref)", Bound::Upper),
];

/// Results of the lemma sweep.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub suites: Vec<RatioSuite>,
    /// Largest `max|I_h I̲_h u − u| / max|u|` seen, per `m`.
    pub identity_error: Vec<(usize, f64)>,
}

impl LemmaReport {
    pub fn suite(&self, name: &str) -> Option<&RatioSuite> {
        self.suites.iter().find(|s| s.name == name)
    }
}

fn sample_one(
    set: &InterpolatorSet,
    m: usize,
    seed: u64,
    cfg: &LemmaConfig,
) -> Result<(Vec<RatioStats>, f64)> {
    let mut stats: Vec<RatioStats> = SUITES.iter().map(|_| RatioStats::new(m)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let guard = cfg.zero_guard;
    let rho = set.rho;
    let h = set.refined.h;
    let mut identity = 0.0f64;
    let sides = set.neighbor_sides();
    for k in 0..cfg.samples {
        let u = sample_values(set.space.dofs.iter().map(|d| d.location), k, m, &mut rng);
        let norm2: f64 = u.iter().map(|v| v * v).sum();
        let scale = rho * norm2;
        let (a, p, p0) = (set.a(&u), set.p_boundary(&u), set.p_interior(&u));
        let d_h = set.d(&set.harmonic(&u));
        let mut variants = vec![(0, Variant::Plain)];
        variants.extend(sides.iter().map(|&s| (5, Variant::Edge(s))));
        for (base, v) in variants {
            let ub = set.forward(&u, v)?;
            let back = set.backward(&ub)?;
            let umax = u.iter().fold(0.0f64, |x, y| x.max(y.abs()));
            let err = u
                .iter()
                .zip(&back)
                .fold(0.0f64, |x, (a, b)| x.max((a - b).abs()));
            identity = identity.max(err / umax.max(f64::MIN_POSITIVE));
            let (ar, pr) = (set.a_refined(&ub), set.p_refined(&ub));
            stats[base].record(ar, a, scale, guard);
            stats[base + 1].record(ar, a + p0, scale, guard);
            stats[base + 2].record(pr, p + a, scale, guard);
            stats[base + 3].record(p, pr + ar, scale, guard);
            let hb = set.harmonic_refined(&ub);
            stats[base + 4].record(set.d_refined(&hb), d_h, scale, guard);
            if let Variant::Edge(side) = v {
                let g = set.gap(&u, side).unwrap_or(0.0);
                let gr = set.gap_refined(&ub, side).unwrap_or(0.0);
                let gscale = h * norm2;
                if g.abs() >= guard * gscale && gr.abs() >= guard * gscale {
                    stats[10].record(gr.sqrt(), g.sqrt(), 1.0, 0.0);
                } else {
                    stats[10].skipped += 1;
                }
            }
        }
        let rm = &set.refined;
        let ub = sample_values((0..rm.len()).map(|q| rm.point_of(q)), k, m, &mut rng);
        let bscale = rho * ub.iter().map(|v| v * v).sum::<f64>();
        let back = set.backward(&ub)?;
        stats[11].record(set.a(&back), set.a_refined(&ub), bscale, guard);
        stats[12].record(set.p_boundary(&back), set.p_refined(&ub), bscale, guard);
        stats[13].record(
            set.a(&back) + set.p_boundary(&back),
            set.a_refined(&ub) + set.p_refined(&ub),
            bscale,
            guard,
        );
    }
    Ok((stats, identity))
}

/// Runs every ratio suite over `cfg.ms` with `ρ ≡ 1`.
pub fn check_lemma_equivalences(cfg: &LemmaConfig) -> Result<LemmaReport> {
    let mut per_m = Vec::with_capacity(cfg.ms.len());
    for &m in &cfg.ms {
        let problem = Problem::build(ProblemConfig::new(
            cfg.n,
            m,
            CoefficientField::Constant(1.0),
        ))?;
        let results = cfg
            .subdomains
            .par_iter()
            .map(|&i| -> Result<(Vec<RatioStats>, f64)> {
                let set = InterpolatorSet::new(&problem, i)?;
                sample_one(&set, m, cfg.seed ^ ((m as u64) << 32) ^ i as u64, cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut merged: Vec<RatioStats> = SUITES.iter().map(|_| RatioStats::new(m)).collect();
        let mut identity = 0.0f64;
        for (stats, id) in &results {
            for (a, b) in merged.iter_mut().zip(stats) {
                a.merge(b);
            }
            identity = identity.max(*id);
        }
        per_m.push((merged, (m, identity)));
    }
    let suites = SUITES
        .iter()
        .enumerate()
        .map(|(k, &(name, bound))| RatioSuite {
            name: name.to_string(),
            bound,
            rows: per_m.iter().map(|(s, _)| s[k].clone()).collect(),
        })
        .collect();
    Ok(LemmaReport {
        suites,
        identity_error: per_m.iter().map(|(_, id)| *id).collect(),
    })
}

/// Sampled constants of `γ₀ d_h ≤ a_h ≤ γ₁ d_h`.
#[derive(Debug, Clone, Serialize)]
pub struct CoercivityReport {
    pub samples: usize,
    pub gamma0: f64,
    pub gamma1: f64,
}

/// Samples `a_h(u, u) / d_h(u, u)` over random global vectors.
pub fn sample_coercivity(problem: &Problem, samples: usize, seed: u64) -> Result<CoercivityReport> {
    let energy = (0..problem.subdomains())
        .map(|i| problem.local_form(i, FormParts::ENERGY))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CoercivityReport {
        samples,
        gamma0: f64::INFINITY,
        gamma1: 0.0,
    };
    for k in 0..samples {
        let points = (0..problem.maps.n_global).map(|_| [0.0; 2]);
        let u = if k % 2 == 0 {
            sample_values(points, 0, 1, &mut rng)
        } else {
            let locs: Vec<[f64; 2]> = problem
                .maps
                .spaces
                .iter()
                .flat_map(|s| s.dofs[..s.n_own].iter().map(|d| d.location))
                .collect();
            sample_values(locs.into_iter(), 2, problem.config.m, &mut rng)
        };
        let local = problem.restrict_all(&u);
        let mut a = 0.0;
        let mut d = 0.0;
        for (i, ui) in local.iter().enumerate() {
            a += problem.locals[i].matrix.quad_form(ui);
            d += energy[i].quad_form(ui);
        }
        let r = a / d;
        report.gamma0 = report.gamma0.min(r);
        report.gamma1 = report.gamma1.max(r);
    }
    Ok(report)
}

fn random_dual(feti: &FetiDp, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    feti.problem
        .maps
        .spaces
        .iter()
        .map(|s| {
            (0..s.delta.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect()
}

fn pair(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| dot(x, y)).sum()
}

fn s_delta(feti: &FetiDp, u: &[Vec<f64>]) -> Vec<Vec<f64>> {
    feti.schur
        .iter()
        .zip(u)
        .map(|(ls, ui)| ls.delta.apply(ui))
        .collect()
}

/// Outcome of sampling `⟨S̃u, u⟩ ≤ ⟨S'_Δu, u⟩`.
#[derive(Debug, Clone, Serialize)]
pub struct SchurComparison {
    pub samples: usize,
    /// Largest `(⟨S̃u,u⟩ − ⟨S'_Δu,u⟩) / ⟨S'_Δu,u⟩`; non-positive when the
    /// inequality holds.
    pub worst_excess: f64,
    pub violations: usize,
}

pub fn compare_schur(feti: &FetiDp, samples: usize, seed: u64, tol: f64) -> SchurComparison {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SchurComparison {
        samples,
        worst_excess: f64::NEG_INFINITY,
        violations: 0,
    };
    for _ in 0..samples {
        let u = random_dual(feti, &mut rng);
        let st = pair(&feti.apply_s_tilde(&u), &u);
        let sd = pair(&s_delta(feti, &u), &u);
        let excess = (st - sd) / sd.abs();
        if excess > tol {
            out.violations += 1;
        }
        out.worst_excess = out.worst_excess.max(excess);
    }
    out
}

/// Sampled `‖P_Δ w‖²_{S'_Δ} / ‖w‖²_{S̃}`.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionBound {
    pub m: usize,
    pub samples: usize,
    pub max_ratio: f64,
    /// `max_ratio / (1 + log m)²`.
    pub normalized: f64,
}

pub fn sample_projection_bound(feti: &FetiDp, samples: usize, seed: u64) -> ProjectionBound {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0f64;
    for _ in 0..samples {
        let w = random_dual(feti, &mut rng);
        let pw = feti.apply_p(&w);
        let num = pair(&s_delta(feti, &pw), &pw);
        let den = pair(&feti.apply_s_tilde(&w), &w);
        max_ratio = max_ratio.max(num / den);
    }
    let m = feti.problem.config.m;
    let log = 1.0 + (m as f64).ln();
    ProjectionBound {
        m,
        samples,
        max_ratio,
        normalized: max_ratio / (log * log),
    }
}

/// Largest errors of `B_Δ P_Δ = B_Δ` and `P_Δ² = P_Δ` on random vectors,
/// relative to the largest input entry.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionIdentities {
    pub samples: usize,
    pub bp_error: f64,
    pub pp_error: f64,
}

pub fn check_projection(feti: &FetiDp, samples: usize, seed: u64) -> ProjectionIdentities {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ProjectionIdentities {
        samples,
        bp_error: 0.0,
        pp_error: 0.0,
    };
    let diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    };
    for _ in 0..samples {
        let w = random_dual(feti, &mut rng);
        let wmax = w.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let pw = feti.apply_p(&w);
        let ppw = feti.apply_p(&pw);
        out.bp_error = out
            .bp_error
            .max(diff(&feti.jump.apply(&pw), &feti.jump.apply(&w)) / wmax);
        let flat = |v: &[Vec<f64>]| v.concat();
        out.pp_error = out.pp_error.max(diff(&flat(&ppw), &flat(&pw)) / wmax);
    }
    out
}

/// Largest relative error of `⟨S'_i u, u⟩ = a'_i(H'_i u, H'_i u)`.
pub fn check_energy_identity(feti: &FetiDp, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for (i, ls) in feti.schur.iter().enumerate() {
        let a = &feti.problem.locals[i].matrix;
        for _ in 0..samples {
            let u: Vec<f64> = (0..ls.full.dim())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let s = dot(&ls.full.apply(&u), &u);
            let e = a.quad_form(&ls.extender().extend(&u));
            worst = worst.max((s - e).abs() / e.abs().max(f64::MIN_POSITIVE));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_produces_all_suites() {
        let cfg = LemmaConfig {
            ms: vec![2, 4],
            samples: 12,
            ..Default::default()
        };
        let rep = check_lemma_equivalences(&cfg).unwrap();
        assert_eq!(rep.suites.len(), SUITES.len());
        for s in &rep.suites {
            assert_eq!(s.rows.len(), 2);
            assert!(s.rows.iter().all(|r| r.samples > 0), "{}", s.name);
        }
        assert!(rep.identity_error.iter().all(|&(_, e)| e < 1e-13));
        let mut buf = Vec::new();
        write_ratio_csv(&rep.suites, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().lines().count(),
            1 + 2 * SUITES.len()
        );
    }

    #[test]
    fn constants_are_skipped_on_floating_subdomains() {
        let p = Problem::build(ProblemConfig::new(3, 2, CoefficientField::Constant(1.0))).unwrap();
        let set = InterpolatorSet::new(&p, 4).unwrap();
        let u = vec![1.0; set.space.len()];
        let mut st = RatioStats::new(2);
        st.record(
            set.a_refined(&set.forward(&u, Variant::Plain).unwrap()),
            set.a(&u),
            1.0,
            1e-13,
        );
        assert_eq!((st.samples, st.skipped), (0, 1));
    }

    #[test]
    fn growth_of_constants() {
        let mk = |vals: &[(f64, f64)]| RatioSuite {
            name: "x".into(),
            bound: Bound::TwoSided,
            rows: vals
                .iter()
                .enumerate()
                .map(|(k, &(min, max))| RatioStats {
                    m: 1 << k,
                    samples: 1,
                    skipped: 0,
                    min,
                    max,
                })
                .collect(),
        };
        assert!(mk(&[(0.5, 2.0), (0.5, 2.1)]).bounded(0.1));
        assert!(!mk(&[(0.5, 2.0), (0.4, 2.0)]).bounded(0.1));
    }

    #[test]
    fn coercivity_is_positive() {
        let p = Problem::build(ProblemConfig::new(2, 3, CoefficientField::Constant(1.0))).unwrap();
        let rep = sample_coercivity(&p, 20, 1).unwrap();
        assert!(rep.gamma0 > 0.0 && rep.gamma1 < 10.0);
    }
}
