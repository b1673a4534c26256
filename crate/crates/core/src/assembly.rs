//! Symmetric interior penalty forms on the extended local spaces.
//!
//! Every edge contribution is written through one generic block: for dofs
//! `k, l` with normal flux `g`, side sign `σ` and edge trace `φ`,
//!
//! ```text
//! A[l][k] += −c_flux (g_k σ_l ∫φ_l + g_l σ_k ∫φ_k) + c_pen σ_k σ_l ∫φ_k φ_l
//! ```
//!
//! Interior edges use `c_flux = ρ/2`, `c_pen = δρ/h_e` and the gradient of
//! every dof against the `+` normal. Interface edges use `c_flux = ρ/l`,
//! `c_pen = δρ/(l h_e)` and only the own element's normal derivatives.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::dofs::{DofKind, LocalSpace};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::mesh::{Partition, Side, SubdomainMesh, Triangle};

/// Piecewise constant coefficient, one value per subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CoefficientField {
    Constant(f64),
    /// Subdomain `(row, col)` is black when `row + col` is even.
    Checkerboard {
        black: f64,
        red: f64,
    },
}

impl CoefficientField {
    pub fn validate(&self, part: &Partition) -> Result<()> {
        let ok = match *self {
            CoefficientField::Constant(r) => r > 0.0 && r.is_finite(),
            CoefficientField::Checkerboard { black, red } => {
                if part.per_side() < 2 {
                    return Err(Error::InvalidConfig(
                        "checkerboard coefficients need at least 2 subdomains per side".into(),
                    ));
                }
                black > 0.0 && red > 0.0 && black.is_finite() && red.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "coefficients must be positive and finite, got {self:?}"
            )))
        }
    }

    pub fn rho(&self, part: &Partition, i: usize) -> f64 {
        match *self {
            CoefficientField::Constant(r) => r,
            CoefficientField::Checkerboard { black, red } => {
                let (r, c) = part.row_col(i);
                if (r + c) % 2 == 0 {
                    black
                } else {
                    red
                }
            }
        }
    }

    pub fn black_red(&self) -> (f64, f64) {
        match *self {
            CoefficientField::Constant(r) => (r, r),
            CoefficientField::Checkerboard { black, red } => (black, red),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyParams {
    pub delta: f64,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        Self { delta: 10.0 }
    }
}

/// Right-hand side `f`.
#[derive(Clone)]
pub enum LoadFunction {
    Constant(f64),
    /// `2π² sin(πx) sin(πy)`, whose solution for `ρ ≡ 1` is `sin(πx) sin(πy)`.
    SinSin,
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for LoadFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoadFunction::Constant(c) => write!(f, "Constant({c})"),
            LoadFunction::SinSin => write!(f, "SinSin"),
            LoadFunction::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl LoadFunction {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        use std::f64::consts::PI;
        match self {
            LoadFunction::Constant(c) => *c,
            LoadFunction::SinSin => 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin(),
            LoadFunction::Custom(f) => f(x, y),
        }
    }
}

/// Seven-point rule on the reference triangle, exact for degree 5.
/// Entries are barycentric coordinates and weights summing to one.
pub const TRIANGLE_RULE: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_8;
    const B1: f64 = 0.470_142_064_105_115_1;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_3;
    const W1: f64 = 0.132_394_152_788_506_2;
    const W2: f64 = 0.125_939_180_544_827_2;
    const T: f64 = 1.0 / 3.0;
    [
        ([T, T, T], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// Which pieces of the local form to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FormParts {
    pub volume: bool,
    pub consistency: bool,
    pub penalty: bool,
}

impl FormParts {
    /// The full form `a'_i`.
    pub const FULL: FormParts = FormParts {
        volume: true,
        consistency: true,
        penalty: true,
    };
    /// The energy `d_i`: volume plus penalties.
    pub const ENERGY: FormParts = FormParts {
        volume: true,
        consistency: false,
        penalty: true,
    };
    pub const VOLUME: FormParts = FormParts {
        volume: true,
        consistency: false,
        penalty: false,
    };
    pub const PENALTY: FormParts = FormParts {
        volume: false,
        consistency: false,
        penalty: true,
    };
}

/// Closed-form `ρ ∫ ∇φ_k · ∇φ_l` on one triangle.
pub fn element_stiffness(t: &Triangle, rho: f64) -> Result<[[f64; 3]; 3]> {
    let g = t.basis_gradients()?;
    let area = t.signed_area().abs();
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = rho * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    Ok(k)
}

/// Position of a dof's trace along an edge parametrized from `P0` to `P1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgePos {
    Start,
    End,
    Off,
}

/// One dof taking part in an edge block.
#[derive(Debug, Clone, Copy)]
pub struct EdgeDof {
    pub local: usize,
    /// Normal derivative of the basis function on the edge.
    pub grad_n: f64,
    pub sign: f64,
    pub pos: EdgePos,
}

fn trace_integral(d: &EdgeDof, h: f64) -> f64 {
    if d.pos == EdgePos::Off {
        0.0
    } else {
        0.5 * h
    }
}

fn trace_mass(a: &EdgeDof, b: &EdgeDof, h: f64) -> f64 {
    match (a.pos, b.pos) {
        (EdgePos::Off, _) | (_, EdgePos::Off) => 0.0,
        (p, q) if p == q => h / 3.0,
        _ => h / 6.0,
    }
}

/// Dense edge block over `dofs` (row = test, column = trial).
pub fn edge_block(
    dofs: &[EdgeDof],
    h: f64,
    c_flux: f64,
    c_pen: f64,
    parts: FormParts,
) -> Vec<Vec<f64>> {
    let n = dofs.len();
    let mut out = vec![vec![0.0; n]; n];
    for (l, dl) in dofs.iter().enumerate() {
        for (k, dk) in dofs.iter().enumerate() {
            let mut v = 0.0;
            if parts.consistency {
                v -= c_flux
                    * (dk.grad_n * dl.sign * trace_integral(dl, h)
                        + dl.grad_n * dk.sign * trace_integral(dk, h));
            }
            if parts.penalty {
                v += c_pen * dk.sign * dl.sign * trace_mass(dk, dl, h);
            }
            out[l][k] = v;
        }
    }
    out
}

fn pos_of(grid: [i64; 2], start: [i64; 2], end: [i64; 2]) -> EdgePos {
    if grid == start {
        EdgePos::Start
    } else if grid == end {
        EdgePos::End
    } else {
        EdgePos::Off
    }
}

/// Edge dofs of one element's three basis functions for its edge `k`.
fn element_edge_dofs(
    t: &Triangle,
    normal: [f64; 2],
    sign: f64,
    start: [i64; 2],
    end: [i64; 2],
    base: usize,
) -> Result<[EdgeDof; 3]> {
    let g = t.basis_gradients()?;
    Ok(std::array::from_fn(|v| EdgeDof {
        local: base + v,
        grad_n: g[v][0] * normal[0] + g[v][1] * normal[1],
        sign,
        pos: pos_of(t.grid[v], start, end),
    }))
}

/// `6 × 6` block of an edge shared by two elements; dofs ordered
/// `(+ v0, + v1, + v2, − v0, − v1, − v2)`.
pub fn interior_edge_terms(
    plus: (&Triangle, usize),
    minus: (&Triangle, usize),
    rho: f64,
    delta: f64,
    parts: FormParts,
) -> Result<Vec<Vec<f64>>> {
    let (tp, kp) = plus;
    let (tm, km) = minus;
    let [a, b] = Triangle::edge_vertices(kp);
    let (start, end) = (tp.grid[a], tp.grid[b]);
    let [c, d] = Triangle::edge_vertices(km);
    let mut ends = [tm.grid[c], tm.grid[d]];
    ends.sort();
    let mut mine = [start, end];
    mine.sort();
    if ends != mine {
        return Err(Error::InvalidConfig(
            "interior edge is not shared by its two elements".into(),
        ));
    }
    let n = tp.outward_normal(kp);
    let h = tp.edge_length(kp);
    let mut dofs = Vec::with_capacity(6);
    dofs.extend(element_edge_dofs(tp, n, 1.0, start, end, 0)?);
    dofs.extend(element_edge_dofs(tm, n, -1.0, start, end, 3)?);
    Ok(edge_block(&dofs, h, 0.5 * rho, delta * rho / h, parts))
}

/// Block of an edge on `∂Ω_i`: own element dofs `v0, v1, v2`, followed by
/// the two trace dofs (edge start, edge end) when `with_trace` is set.
#[allow(clippy::too_many_arguments)]
pub fn interface_edge_terms(
    t: &Triangle,
    k: usize,
    endpoints: [usize; 2],
    rho: f64,
    delta: f64,
    weight: f64,
    with_trace: bool,
    parts: FormParts,
) -> Result<Vec<Vec<f64>>> {
    let start = t.grid[endpoints[0]];
    let end = t.grid[endpoints[1]];
    let n = t.outward_normal(k);
    let h = t.edge_length(k);
    let mut dofs: Vec<EdgeDof> = element_edge_dofs(t, n, 1.0, start, end, 0)?.to_vec();
    if with_trace {
        for (p, pos) in [EdgePos::Start, EdgePos::End].into_iter().enumerate() {
            dofs.push(EdgeDof {
                local: 3 + p,
                grad_n: 0.0,
                sign: -1.0,
                pos,
            });
        }
    }
    Ok(edge_block(
        &dofs,
        h,
        rho / weight,
        delta * rho / (weight * h),
        parts,
    ))
}

/// Assembled local stiffness `A'_i` and load `f_i` on `W_i(Ω'_i)`.
#[derive(Debug, Clone)]
pub struct LocalStiffness {
    pub subdomain: usize,
    pub rho: f64,
    pub matrix: CsrMatrix,
    pub load: Vec<f64>,
}

/// Assembles the requested parts of the local form of one subdomain.
pub fn assemble_form(
    part: &Partition,
    mesh: &SubdomainMesh,
    space: &LocalSpace,
    rho: f64,
    delta: f64,
    parts: FormParts,
) -> Result<CsrMatrix> {
    let n = space.len();
    let mut b = TripletBuilder::new(n, n);
    if parts.volume {
        for (e, t) in mesh.elements.iter().enumerate() {
            let k = element_stiffness(t, rho)?;
            for a in 0..3 {
                for c in 0..3 {
                    b.push(3 * e + a, 3 * e + c, k[a][c]);
                }
            }
        }
    }
    if parts.consistency || parts.penalty {
        for edge in &mesh.interior_edges {
            let (ep, kp) = edge.plus;
            let (em, km) = edge.minus;
            let blk = interior_edge_terms(
                (&mesh.elements[ep], kp),
                (&mesh.elements[em], km),
                rho,
                delta,
                parts,
            )?;
            let map = |x: usize| if x < 3 { 3 * ep + x } else { 3 * em + x - 3 };
            for (l, row) in blk.iter().enumerate() {
                for (k, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        b.push(map(l), map(k), v);
                    }
                }
            }
        }
        for side in Side::ALL {
            let neighbor = part.neighbor(mesh.index, side);
            let weight = if neighbor.is_some() { 2.0 } else { 1.0 };
            for (k, fe) in mesh.side(side).iter().enumerate() {
                let t = &mesh.elements[fe.element];
                let blk = interface_edge_terms(
                    t,
                    fe.local_edge,
                    fe.endpoints,
                    rho,
                    delta,
                    weight,
                    neighbor.is_some(),
                    parts,
                )?;
                let map = |x: usize| {
                    if x < 3 {
                        3 * fe.element + x
                    } else {
                        space
                            .trace_index(side, k, x - 3)
                            .expect("trace block exists for interior sides")
                    }
                };
                for (l, row) in blk.iter().enumerate() {
                    for (c, &v) in row.iter().enumerate() {
                        if v != 0.0 {
                            b.push(map(l), map(c), v);
                        }
                    }
                }
            }
        }
    }
    Ok(b.build())
}

/// Load vector `∫ f φ` on own dofs; trace dofs carry zero.
pub fn assemble_load(mesh: &SubdomainMesh, space: &LocalSpace, load: &LoadFunction) -> Vec<f64> {
    let mut f = vec![0.0; space.len()];
    if let LoadFunction::Constant(c) = load {
        for (e, t) in mesh.elements.iter().enumerate() {
            let share = c * t.signed_area().abs() / 3.0;
            for v in 0..3 {
                f[3 * e + v] = share;
            }
        }
        return f;
    }
    for (e, t) in mesh.elements.iter().enumerate() {
        let area = t.signed_area().abs();
        for (bary, w) in TRIANGLE_RULE {
            let p = t.point(bary);
            let fv = load.eval(p[0], p[1]) * w * area;
            for v in 0..3 {
                f[3 * e + v] += fv * bary[v];
            }
        }
    }
    f
}

/// Full local stiffness and load.
pub fn assemble_local(
    part: &Partition,
    mesh: &SubdomainMesh,
    space: &LocalSpace,
    rho: f64,
    penalty: PenaltyParams,
    load: &LoadFunction,
) -> Result<LocalStiffness> {
    Ok(LocalStiffness {
        subdomain: mesh.index,
        rho,
        matrix: assemble_form(part, mesh, space, rho, penalty.delta, FormParts::FULL)?,
        load: assemble_load(mesh, space, load),
    })
}

/// `Σ_i R_iᵀ A_i R_i` over `X(Ω)`, summed in subdomain order.
pub fn fold_global(
    n_global: usize,
    locals: &[&CsrMatrix],
    global_of: impl Fn(usize, usize) -> usize,
) -> CsrMatrix {
    let mut b = TripletBuilder::new(n_global, n_global);
    for (i, a) in locals.iter().enumerate() {
        for r in 0..a.nrows() {
            let gr = global_of(i, r);
            for (c, v) in a.row(r) {
                b.push(gr, global_of(i, c), v);
            }
        }
    }
    b.build()
}

/// `L²(Ω)` error of a global dof vector against `exact`.
pub fn l2_error(
    meshes: &[SubdomainMesh],
    own_offset: &[usize],
    u: &[f64],
    exact: impl Fn(f64, f64) -> f64,
) -> f64 {
    let mut acc = 0.0;
    for (i, mesh) in meshes.iter().enumerate() {
        for (e, t) in mesh.elements.iter().enumerate() {
            let area = t.signed_area().abs();
            let base = own_offset[i] + 3 * e;
            for (bary, w) in TRIANGLE_RULE {
                let p = t.point(bary);
                let uh: f64 = (0..3).map(|v| bary[v] * u[base + v]).sum();
                acc += w * area * (uh - exact(p[0], p[1])).powi(2);
            }
        }
    }
    acc.sqrt()
}

/// Whether a local dof is a trace copy.
pub fn is_trace(space: &LocalSpace, k: usize) -> bool {
    matches!(space.dofs[k].kind, DofKind::Trace { .. })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dofs::build_extended_space;
    use crate::mesh::{build_partition, triangulate_all};

    fn unit_triangle() -> Triangle {
        Triangle {
            vertices: [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            grid: [[0, 0], [1, 0], [0, 1]],
        }
    }

    #[test]
    fn reference_element_stiffness() {
        let k = element_stiffness(&unit_triangle(), 1.0).unwrap();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((k[a][b] - expect[a][b]).abs() < 1e-15);
            }
            assert!(k[a].iter().sum::<f64>().abs() < 1e-15);
        }
        let mut t = unit_triangle();
        for v in &mut t.vertices {
            v[0] *= 3.5;
            v[1] *= 3.5;
        }
        let ks = element_stiffness(&t, 1.0).unwrap();
        assert!((ks[0][0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_element_rejected() {
        let t = Triangle {
            vertices: [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            grid: [[0, 0], [1, 0], [2, 0]],
        };
        assert!(matches!(
            element_stiffness(&t, 1.0),
            Err(Error::DegenerateElement(_))
        ));
    }

    #[test]
    fn interior_edge_block_properties() {
        let p = build_partition(1).unwrap();
        let mesh = &triangulate_all(&p, 2).unwrap()[0];
        for edge in &mesh.interior_edges {
            let blk = interior_edge_terms(
                (&mesh.elements[edge.plus.0], edge.plus.1),
                (&mesh.elements[edge.minus.0], edge.minus.1),
                2.0,
                10.0,
                FormParts::FULL,
            )
            .unwrap();
            for a in 0..6 {
                for b in 0..6 {
                    assert!((blk[a][b] - blk[b][a]).abs() < 1e-13);
                }
            }
            // piecewise constant jump c+ − c− = 1
            let u = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
            let pen = interior_edge_terms(
                (&mesh.elements[edge.plus.0], edge.plus.1),
                (&mesh.elements[edge.minus.0], edge.minus.1),
                2.0,
                10.0,
                FormParts::PENALTY,
            )
            .unwrap();
            let e: f64 = (0..6)
                .map(|a| (0..6).map(|b| u[a] * pen[a][b] * u[b]).sum::<f64>())
                .sum();
            assert!((e - 20.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_span_kernel_of_floating_subdomain() {
        let p = build_partition(3).unwrap();
        let meshes = triangulate_all(&p, 3).unwrap();
        let space = build_extended_space(&p, &meshes, 4);
        let a = assemble_form(&p, &meshes[4], &space, 2.0, 10.0, FormParts::FULL).unwrap();
        let ones = vec![1.0; space.len()];
        assert!(crate::linalg::max_abs(&a.mul_vec(&ones)) < 1e-12);
        assert!(a.asymmetry() <= 1e-14 * a.max_abs());
    }

    #[test]
    fn constant_load_shares_area() {
        let p = build_partition(2).unwrap();
        let meshes = triangulate_all(&p, 4).unwrap();
        let space = build_extended_space(&p, &meshes, 0);
        let f = assemble_load(&meshes[0], &space, &LoadFunction::Constant(1.0));
        let h = meshes[0].h;
        assert!(f[..space.n_own]
            .iter()
            .all(|v| (v - h * h / 6.0).abs() < 1e-16));
        assert!(f[space.n_own..].iter().all(|&v| v == 0.0));
        let g = assemble_load(
            &meshes[0],
            &space,
            &LoadFunction::Custom(Arc::new(|_, _| 1.0)),
        );
        for (a, b) in f.iter().zip(&g) {
            assert!((a - b).abs() < 1e-16);
        }
    }
}
