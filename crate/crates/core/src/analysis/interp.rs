//! Transfer between `W_i(Ω'_i)` and the refined space `W̲_i(Ω'_i)`, and the
//! refined bilinear forms.

use crate::assembly::FormParts;
use crate::dofs::LocalSpace;
use crate::error::{check_len, Error, Result};
use crate::linalg::{CsrMatrix, SparseCholesky, TripletBuilder};
use crate::mesh::{Side, SubdomainMesh};
use crate::problem::Problem;
use crate::subdomain::{HarmonicExtender, LocalSchur};

use super::refine::{refine_subdomain, EdgeRefinement, NodeKind, RefinedMesh};

/// Which forward interpolator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `I̲_h^i`.
    Plain,
    /// `I̲_h^{i,j}` for the neighbor across `side`: the two endpoints of
    /// that side take the one-sided limit along it.
    Edge(Side),
}

fn element_value(u: &[f64], e: usize, bary: [f64; 3]) -> f64 {
    bary[0] * u[3 * e] + bary[1] * u[3 * e + 1] + bary[2] * u[3 * e + 2]
}

/// Forward map `W_i(Ω'_i) → W̲_i(Ω'_i)`.
pub fn interp_forward(
    rm: &RefinedMesh,
    space: &LocalSpace,
    u: &[f64],
    variant: Variant,
) -> Result<Vec<f64>> {
    check_len(space.len(), u.len())?;
    let mut out = vec![0.0; rm.len()];
    let value_in = |e: usize, node: usize| {
        let b = rm.parents[e].bary_of(node).expect("node belongs to parent");
        element_value(u, e, b)
    };
    let average = |node: usize, elems: &[usize]| {
        elems.iter().map(|&e| value_in(e, node)).sum::<f64>() / elems.len() as f64
    };
    for (id, node) in rm.nodes.iter().enumerate() {
        out[id] = match node.kind {
            NodeKind::C => value_in(node.elements[0], id),
            NodeKind::M => average(id, &node.elements),
            NodeKind::V if node.on_boundary() => average(id, &node.boundary_elements),
            NodeKind::V => average(id, &node.elements),
        };
    }
    if let Variant::Edge(side) = variant {
        let edges = &rm.sides[side.index()];
        if let (Some(first), Some(last)) = (edges.first(), edges.last()) {
            for (edge, end) in [
                (first, first.nodes[0]),
                (last, last.nodes[last.nodes.len() - 1]),
            ] {
                if end.kind == NodeKind::V {
                    let e = rm.children[edge.segment_children[0]].parent;
                    out[end.node] = value_in(e, end.node);
                }
            }
        }
    }
    for side in Side::ALL {
        let Some(tr) = rm.trace(side) else {
            continue;
        };
        let m = tr.edges.len();
        let mut sum = vec![0.0; tr.len()];
        let mut count = vec![0usize; tr.len()];
        for (k, edge) in tr.edges.iter().enumerate() {
            let u0 = u[space.trace_index(side, k, 0).expect("trace block")];
            let u1 = u[space.trace_index(side, k, 1).expect("trace block")];
            for n in &edge.nodes {
                let t = n.t();
                let local = n.node - tr.offset;
                let at_end = (k == 0 && n.sixths == 0) || (k + 1 == m && n.sixths == 6);
                match n.kind {
                    NodeKind::V if !at_end => {
                        sum[local] += if n.sixths == 0 { u0 } else { u1 };
                        count[local] += 1;
                    }
                    _ => {
                        sum[local] = (1.0 - t) * u0 + t * u1;
                        count[local] = 1;
                    }
                }
            }
        }
        for (l, (s, c)) in sum.iter().zip(&count).enumerate() {
            out[tr.offset + l] = s / *c as f64;
        }
    }
    Ok(out)
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *xc = det(m) / d;
    }
    x
}

/// Backward map `W̲_i(Ω'_i) → W_i(Ω'_i)` by linear extrapolation from the
/// `C` nodes of every parent element and of every trace edge.
pub fn interp_backward(rm: &RefinedMesh, space: &LocalSpace, ub: &[f64]) -> Result<Vec<f64>> {
    check_len(rm.len(), ub.len())?;
    let mut out = vec![0.0; space.len()];
    for (e, pr) in rm.parents.iter().enumerate() {
        let c = pr.c_nodes.map(|n| ub[n]);
        let v = solve3(pr.c_bary, c);
        out[3 * e..3 * e + 3].copy_from_slice(&v);
    }
    for side in Side::ALL {
        let Some(tr) = rm.trace(side) else {
            continue;
        };
        for (k, edge) in tr.edges.iter().enumerate() {
            let [a, b] = edge
                .c_pair()
                .ok_or_else(|| Error::InvalidConfig("trace edge without two C nodes".into()))?;
            let (va, vb) = (ub[a.node], ub[b.node]);
            let at = |t: f64| va + (vb - va) * (t - a.t()) / (b.t() - a.t());
            out[space.trace_index(side, k, 0).expect("trace block")] = at(0.0);
            out[space.trace_index(side, k, 1).expect("trace block")] = at(1.0);
        }
    }
    Ok(out)
}

fn p1_gradients(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area2 =
        (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        g[k] = [(a[1] - b[1]) / area2, (b[0] - a[0]) / area2];
    }
    (g, 0.5 * area2.abs())
}

fn outward(side: Side) -> [f64; 2] {
    match side {
        Side::Bottom => [0.0, -1.0],
        Side::Right => [1.0, 0.0],
        Side::Top => [0.0, 1.0],
        Side::Left => [-1.0, 0.0],
    }
}

type LinComb = Vec<(usize, f64)>;

/// `trace − own` at a parameter given in twelfths; the trace is zero when
/// absent.
fn difference_at(own: &EdgeRefinement, trace: Option<&EdgeRefinement>, twelfths: i64) -> LinComb {
    let mut w: LinComb = own
        .weights_at(twelfths)
        .iter()
        .map(|&(n, c)| (n, -c))
        .collect();
    if let Some(tr) = trace {
        w.extend(tr.weights_at(twelfths));
    }
    w
}

fn push_outer(b: &mut TripletBuilder, c: f64, x: &LinComb, y: &LinComb) {
    for &(r, wr) in x {
        for &(s, ws) in y {
            b.push(r, s, c * wr * ws);
        }
    }
}

/// Sorted union of breakpoints (in sixths) of two edge refinements.
fn breakpoints(own: &EdgeRefinement, trace: Option<&EdgeRefinement>) -> Vec<i64> {
    let mut bp: Vec<i64> = own.nodes.iter().map(|n| n.sixths).collect();
    if let Some(tr) = trace {
        bp.extend(tr.nodes.iter().map(|n| n.sixths));
    }
    bp.sort_unstable();
    bp.dedup();
    bp
}

/// Adds `coef · ∫_side (trace − own)²` to `b`, exactly by Simpson's rule on
/// the common refinement.
fn add_side_mass(b: &mut TripletBuilder, rm: &RefinedMesh, side: Side, coef: f64) {
    let trace = rm.trace(side);
    for (k, own) in rm.sides[side.index()].iter().enumerate() {
        let tr = trace.map(|t| &t.edges[k]);
        for w in breakpoints(own, tr).windows(2) {
            let len = (w[1] - w[0]) as f64 / 6.0 * rm.h;
            for (tw, q) in [(2 * w[0], 1.0), (w[0] + w[1], 4.0), (2 * w[1], 1.0)] {
                let d = difference_at(own, tr, tw);
                push_outer(b, coef * len * q / 6.0, &d, &d);
            }
        }
    }
}

fn side_weight(rm: &RefinedMesh, side: Side) -> f64 {
    if rm.trace(side).is_some() {
        2.0
    } else {
        1.0
    }
}

/// Refined forms on `W̲_i(Ω'_i)`: volume `a̲_i`, boundary consistency
/// `s_{i,∂}` and boundary penalty `p_{i,∂}`.
#[derive(Debug, Clone)]
pub struct RefinedForms {
    pub a: CsrMatrix,
    pub s: CsrMatrix,
    pub p: CsrMatrix,
}

impl RefinedForms {
    pub fn assemble(rm: &RefinedMesh, rho: f64, delta: f64) -> Self {
        let n = rm.len();
        let mut a = TripletBuilder::new(n, n);
        for c in 0..rm.children.len() {
            let (g, area) = p1_gradients(rm.child_points(c));
            let ids = rm.children[c].nodes;
            for r in 0..3 {
                for s in 0..3 {
                    a.push(
                        ids[r],
                        ids[s],
                        rho * area * (g[r][0] * g[s][0] + g[r][1] * g[s][1]),
                    );
                }
            }
        }
        let mut p = TripletBuilder::new(n, n);
        let mut s = TripletBuilder::new(n, n);
        for side in Side::ALL {
            let l = side_weight(rm, side);
            add_side_mass(&mut p, rm, side, delta * rho / (l * rm.h));
            let normal = outward(side);
            let trace = rm.trace(side);
            for (k, own) in rm.sides[side.index()].iter().enumerate() {
                let tr = trace.map(|t| &t.edges[k]);
                for w in breakpoints(own, tr).windows(2) {
                    let len = (w[1] - w[0]) as f64 / 6.0 * rm.h;
                    let child = own.segment_children[own.segment_at(w[0] + w[1])];
                    let (g, _) = p1_gradients(rm.child_points(child));
                    let dn: LinComb = rm.children[child]
                        .nodes
                        .iter()
                        .zip(&g)
                        .map(|(&id, gk)| (id, gk[0] * normal[0] + gk[1] * normal[1]))
                        .collect();
                    let d = difference_at(own, tr, w[0] + w[1]);
                    let c = rho / l * len;
                    push_outer(&mut s, c, &dn, &d);
                    push_outer(&mut s, c, &d, &dn);
                }
            }
        }
        Self {
            a: a.build(),
            s: s.build(),
            p: p.build(),
        }
    }

    /// `a̲'_i(u̲, u̲)`.
    pub fn a_prime(&self, x: &[f64]) -> f64 {
        self.a.quad_form(x) + self.s.quad_form(x) + self.p.quad_form(x)
    }

    /// `d̲_i(u̲, u̲)`.
    pub fn d(&self, x: &[f64]) -> f64 {
        self.a.quad_form(x) + self.p.quad_form(x)
    }

    pub fn d_matrix(&self) -> CsrMatrix {
        add(&self.a, &self.p)
    }
}

fn add(x: &CsrMatrix, y: &CsrMatrix) -> CsrMatrix {
    let mut b = TripletBuilder::new(x.nrows(), x.ncols());
    for m in [x, y] {
        for r in 0..m.nrows() {
            for (c, v) in m.row(r) {
                b.push(r, c, v);
            }
        }
    }
    b.build()
}

/// `∫_{E_side} (trace − own)²` on the refined space.
pub fn refined_side_mass(rm: &RefinedMesh, side: Side) -> CsrMatrix {
    let mut b = TripletBuilder::new(rm.len(), rm.len());
    add_side_mass(&mut b, rm, side, 1.0);
    b.build()
}

/// `coef(side) · ∫_side (trace − own)²` on `W_i(Ω'_i)`, the trace taken as
/// zero on sides without a neighbor. Sides with `coef = None` are skipped.
pub fn side_mass(
    mesh: &SubdomainMesh,
    space: &LocalSpace,
    coef: impl Fn(Side) -> Option<f64>,
) -> CsrMatrix {
    let n = space.len();
    let mut b = TripletBuilder::new(n, n);
    for side in Side::ALL {
        let Some(c) = coef(side) else {
            continue;
        };
        for (k, fe) in mesh.side(side).iter().enumerate() {
            let own = [
                3 * fe.element + fe.endpoints[0],
                3 * fe.element + fe.endpoints[1],
            ];
            let tr = [space.trace_index(side, k, 0), space.trace_index(side, k, 1)];
            for (t, q) in [(0.0, 1.0), (0.5, 4.0), (1.0, 1.0)] {
                let mut d: LinComb = vec![(own[0], -(1.0 - t)), (own[1], -t)];
                if let [Some(a), Some(b)] = tr {
                    d.push((a, 1.0 - t));
                    d.push((b, t));
                }
                push_outer(&mut b, c * fe.length * q / 6.0, &d, &d);
            }
        }
    }
    b.build()
}

/// Minimizer of `d̲_i` with `Γ_i` and trace values fixed.
#[derive(Debug)]
pub struct RefinedHarmonic {
    fixed: Vec<usize>,
    free: Vec<usize>,
    chol: SparseCholesky,
    d_fb: CsrMatrix,
    n: usize,
}

impl RefinedHarmonic {
    pub fn new(rm: &RefinedMesh, forms: &RefinedForms) -> Result<Self> {
        let n = rm.len();
        let mut is_fixed = vec![false; n];
        for side in Side::ALL {
            if rm.trace(side).is_none() {
                continue;
            }
            for edge in &rm.sides[side.index()] {
                for node in &edge.nodes {
                    is_fixed[node.node] = true;
                }
            }
        }
        for f in is_fixed.iter_mut().skip(rm.n_own()) {
            *f = true;
        }
        let fixed: Vec<usize> = (0..n).filter(|&k| is_fixed[k]).collect();
        let free: Vec<usize> = (0..n).filter(|&k| !is_fixed[k]).collect();
        let d = forms.d_matrix();
        let chol = SparseCholesky::new(&d.submatrix(&free, &free))?;
        Ok(Self {
            d_fb: d.submatrix(&free, &fixed),
            fixed,
            free,
            chol,
            n,
        })
    }

    pub fn extend(&self, ub: &[f64]) -> Vec<f64> {
        let xb: Vec<f64> = self.fixed.iter().map(|&k| ub[k]).collect();
        let mut xf = self.d_fb.mul_vec(&xb);
        self.chol.solve_in_place(&mut xf);
        let mut out = vec![0.0; self.n];
        for (&k, v) in self.fixed.iter().zip(&xb) {
            out[k] = *v;
        }
        for (&k, v) in self.free.iter().zip(&xf) {
            out[k] = -v;
        }
        out
    }
}

/// Everything needed to compare a substructure's forms on the original and
/// the refined spaces.
pub struct InterpolatorSet {
    pub subdomain: usize,
    pub rho: f64,
    pub refined: RefinedMesh,
    pub space: LocalSpace,
    pub forms: RefinedForms,
    harmonic: RefinedHarmonic,
    extender: HarmonicExtender,
    gamma_prime: Vec<usize>,
    /// `a_i` on `W_i(Ω'_i)`.
    pub volume: CsrMatrix,
    /// All penalty terms of `d_i`.
    pub penalty: CsrMatrix,
    /// `p_{i,∂}` on `W_i(Ω'_i)`.
    pub penalty_boundary: CsrMatrix,
    side_gap: [Option<CsrMatrix>; 4],
    refined_side_gap: [Option<CsrMatrix>; 4],
}

impl InterpolatorSet {
    pub fn new(problem: &Problem, i: usize) -> Result<Self> {
        let refined = refine_subdomain(&problem.partition, &problem.meshes, i)?;
        let space = problem.maps.spaces[i].clone();
        let mesh = &problem.meshes[i];
        let rho = problem.rho[i];
        let delta = problem.config.penalty.delta;
        let forms = RefinedForms::assemble(&refined, rho, delta);
        let harmonic = RefinedHarmonic::new(&refined, &forms)?;
        let ls = LocalSchur::new(
            i,
            &problem.locals[i].matrix,
            &space.interior,
            &space.gamma_prime,
            &space.delta,
        )?;
        let neighbor = |s: Side| problem.partition.neighbor(i, s).is_some();
        let penalty_boundary = side_mass(mesh, &space, |s| {
            let l = if neighbor(s) { 2.0 } else { 1.0 };
            Some(delta * rho / (l * mesh.h))
        });
        let mut side_gap: [Option<CsrMatrix>; 4] = Default::default();
        let mut refined_side_gap: [Option<CsrMatrix>; 4] = Default::default();
        for s in Side::ALL {
            if neighbor(s) {
                side_gap[s.index()] = Some(side_mass(mesh, &space, |t| (t == s).then_some(1.0)));
                refined_side_gap[s.index()] = Some(refined_side_mass(&refined, s));
            }
        }
        Ok(Self {
            subdomain: i,
            rho,
            volume: problem.local_form(i, FormParts::VOLUME)?,
            penalty: problem.local_form(i, FormParts::PENALTY)?,
            penalty_boundary,
            extender: ls.extender(),
            gamma_prime: space.gamma_prime.clone(),
            refined,
            space,
            forms,
            harmonic,
            side_gap,
            refined_side_gap,
        })
    }

    pub fn forward(&self, u: &[f64], variant: Variant) -> Result<Vec<f64>> {
        interp_forward(&self.refined, &self.space, u, variant)
    }

    pub fn backward(&self, ub: &[f64]) -> Result<Vec<f64>> {
        interp_backward(&self.refined, &self.space, ub)
    }

    /// `H̲_i u̲`.
    pub fn harmonic_refined(&self, ub: &[f64]) -> Vec<f64> {
        self.harmonic.extend(ub)
    }

    /// `H'_i u`, from the `Γ'_i` values of `u`.
    pub fn harmonic(&self, u: &[f64]) -> Vec<f64> {
        let ub: Vec<f64> = self.gamma_prime.iter().map(|&k| u[k]).collect();
        self.extender.extend(&ub)
    }

    pub fn a(&self, u: &[f64]) -> f64 {
        self.volume.quad_form(u)
    }

    pub fn p_boundary(&self, u: &[f64]) -> f64 {
        self.penalty_boundary.quad_form(u)
    }

    /// Interior penalty `p_{i,0}`.
    pub fn p_interior(&self, u: &[f64]) -> f64 {
        (self.penalty.quad_form(u) - self.p_boundary(u)).max(0.0)
    }

    pub fn d(&self, u: &[f64]) -> f64 {
        self.a(u) + self.penalty.quad_form(u)
    }

    pub fn a_refined(&self, ub: &[f64]) -> f64 {
        self.forms.a.quad_form(ub)
    }

    pub fn p_refined(&self, ub: &[f64]) -> f64 {
        self.forms.p.quad_form(ub)
    }

    pub fn d_refined(&self, ub: &[f64]) -> f64 {
        self.forms.d(ub)
    }

    /// Neighbor sides of the substructure.
    pub fn neighbor_sides(&self) -> Vec<Side> {
        Side::ALL
            .into_iter()
            .filter(|s| self.side_gap[s.index()].is_some())
            .collect()
    }

    /// `‖(u_i)_i − (u_i)_j‖²_{L²(E_ij)}`.
    pub fn gap(&self, u: &[f64], side: Side) -> Option<f64> {
        self.side_gap[side.index()].as_ref().map(|m| m.quad_form(u))
    }

    pub fn gap_refined(&self, ub: &[f64], side: Side) -> Option<f64> {
        self.refined_side_gap[side.index()]
            .as_ref()
            .map(|m| m.quad_form(ub))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::CoefficientField;
    use crate::linalg::max_abs;
    use crate::problem::ProblemConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(n: usize, m: usize, i: usize) -> (Problem, InterpolatorSet) {
        let p = Problem::build(ProblemConfig::new(n, m, CoefficientField::Constant(1.0))).unwrap();
        let s = InterpolatorSet::new(&p, i).unwrap();
        (p, s)
    }

    fn affine(s: &InterpolatorSet) -> Vec<f64> {
        s.space
            .dofs
            .iter()
            .map(|d| 1.0 + 2.0 * d.location[0] - 3.0 * d.location[1])
            .collect()
    }

    #[test]
    fn backward_inverts_forward() {
        let (_, s) = set(3, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let u: Vec<f64> = (0..s.space.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let mut variants = vec![Variant::Plain];
            variants.extend(s.neighbor_sides().into_iter().map(Variant::Edge));
            for v in variants {
                let back = s.backward(&s.forward(&u, v).unwrap()).unwrap();
                let err = u
                    .iter()
                    .zip(&back)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-13, "{err}");
            }
        }
    }

    #[test]
    fn continuous_input_gives_its_interpolant() {
        let (_, s) = set(2, 3, 0);
        let u = affine(&s);
        let ub = s.forward(&u, Variant::Plain).unwrap();
        for (k, v) in ub.iter().enumerate() {
            let p = s.refined.point_of(k);
            assert!((v - (1.0 + 2.0 * p[0] - 3.0 * p[1])).abs() < 1e-13);
        }
        // gradient (2, −3) over the substructure area
        let h_macro = 0.5;
        assert!((s.a_refined(&ub) - 13.0 * h_macro * h_macro).abs() < 1e-12);
        assert!((s.a(&u) - s.a_refined(&ub)).abs() < 1e-12);
    }

    #[test]
    fn averaging_rules() {
        let (p, s) = set(3, 4, 4);
        let mesh = &p.meshes[4];
        let e = mesh.lower(1, 1);
        let mut u = vec![0.0; s.space.len()];
        u[3 * e..3 * e + 3].fill(1.0);
        let ub = s.forward(&u, Variant::Plain).unwrap();
        let rm = &s.refined;
        for &(node, _) in &rm.parents[e].nodes {
            let expect = match rm.nodes[node].kind {
                NodeKind::C => 1.0,
                NodeKind::M => 0.5,
                NodeKind::V => 1.0 / rm.nodes[node].elements.len() as f64,
            };
            assert!((ub[node] - expect).abs() < 1e-15);
        }
        assert!(rm.parents[e]
            .nodes
            .iter()
            .any(|&(n, _)| rm.nodes[n].kind == NodeKind::V && rm.nodes[n].elements.len() == 6));
    }

    #[test]
    fn edge_variant_takes_the_side_limit() {
        let (p, s) = set(2, 3, 0);
        let mesh = &p.meshes[0];
        // bottom-left corner of subdomain 0 lies on its bottom side
        let e = mesh.lower(0, 0);
        let mut u = vec![0.0; s.space.len()];
        u[3 * e] = 1.0;
        let plain = s.forward(&u, Variant::Plain).unwrap();
        let corner = s.refined.sides[Side::Bottom.index()][0].nodes[0].node;
        assert!((plain[corner] - 0.5).abs() < 1e-15);
        let edge = s.forward(&u, Variant::Edge(Side::Bottom)).unwrap();
        assert!((edge[corner] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn refined_forms_on_continuous_data() {
        let (p, s) = set(2, 2, 0);
        let u = affine(&s);
        let ub = s.forward(&u, Variant::Plain).unwrap();
        // no jump on interface sides; boundary sides see the value itself
        assert!((s.p_refined(&ub) - s.p_boundary(&u)).abs() < 1e-11);
        assert!(s.p_interior(&u) < 1e-12);
        let full = p.local_form(0, FormParts::FULL).unwrap();
        assert!((s.forms.a_prime(&ub) - full.quad_form(&u)).abs() < 1e-10);
        let hb = s.harmonic_refined(&ub);
        assert!(s.d_refined(&hb) <= s.d_refined(&ub) + 1e-12);
        let hu = s.harmonic(&u);
        assert!(s.d(&hu).is_finite());
        let gap = s.gap(&u, Side::Right).unwrap();
        assert!(gap < 1e-14 && s.gap_refined(&ub, Side::Right).unwrap() < 1e-14);
        assert!(max_abs(&ub) > 0.0);
    }
}
