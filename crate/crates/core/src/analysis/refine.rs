//! Auxiliary refinement of a substructure mesh with typed `C`, `M`, `V`
//! nodes, and its one-dimensional counterpart on neighbor trace edges.
//!
//! Node positions are barycentric combinations with denominator six, so
//! every node is keyed by six times its integer grid position and shared
//! nodes are found by exact comparison.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{Partition, Side, SubdomainMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum NodeKind {
    C,
    M,
    V,
}

/// Refinement pattern of one parent element, by the number of its edges on
/// the substructure boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RefinementCase {
    /// No boundary edge: ten children.
    Interior,
    /// One boundary edge: seven children.
    OneEdge,
    /// Two boundary edges: four children.
    TwoEdges,
    /// Three boundary edges: the parent itself.
    Unrefined,
}

impl RefinementCase {
    pub fn from_boundary_count(count: usize) -> Self {
        match count {
            0 => RefinementCase::Interior,
            1 => RefinementCase::OneEdge,
            2 => RefinementCase::TwoEdges,
            _ => RefinementCase::Unrefined,
        }
    }

    pub fn child_count(self) -> usize {
        match self {
            RefinementCase::Interior => 10,
            RefinementCase::OneEdge => 7,
            RefinementCase::TwoEdges => 4,
            RefinementCase::Unrefined => 1,
        }
    }
}

/// Node list (kind, barycentric coordinates in sixths relative to the
/// labels `V1, V2, V3`), child triangles, and the positions of `C1, C2, C3`
/// in the node list.
struct Pattern {
    nodes: &'static [(NodeKind, [i64; 3])],
    children: &'static [[usize; 3]],
    c_nodes: [usize; 3],
}

use NodeKind::{C, M, V};

const INTERIOR: Pattern = Pattern {
    // V1 V2 V3 M1 M2 M3 C1 C2 C3
    nodes: &[
        (V, [6, 0, 0]),
        (V, [0, 6, 0]),
        (V, [0, 0, 6]),
        (M, [0, 3, 3]),
        (M, [3, 0, 3]),
        (M, [3, 3, 0]),
        (C, [4, 1, 1]),
        (C, [1, 4, 1]),
        (C, [1, 1, 4]),
    ],
    children: &[
        [6, 7, 8],
        [0, 5, 6],
        [5, 7, 6],
        [5, 1, 7],
        [1, 3, 7],
        [3, 8, 7],
        [3, 2, 8],
        [2, 4, 8],
        [4, 6, 8],
        [4, 0, 6],
    ],
    c_nodes: [6, 7, 8],
};

const ONE_EDGE: Pattern = Pattern {
    // V1 V2 V3 M2 M3 C1 C2 C3; the boundary edge is V2V3
    nodes: &[
        (V, [6, 0, 0]),
        (V, [0, 6, 0]),
        (V, [0, 0, 6]),
        (M, [3, 0, 3]),
        (M, [3, 3, 0]),
        (C, [2, 2, 2]),
        (C, [0, 4, 2]),
        (C, [0, 2, 4]),
    ],
    children: &[
        [0, 4, 5],
        [4, 1, 5],
        [1, 6, 5],
        [6, 7, 5],
        [7, 2, 5],
        [2, 3, 5],
        [3, 0, 5],
    ],
    c_nodes: [5, 6, 7],
};

const TWO_EDGES: Pattern = Pattern {
    // C1 V2 V3 M1 C2 C3; the boundary edges meet at C1
    nodes: &[
        (C, [6, 0, 0]),
        (V, [0, 6, 0]),
        (V, [0, 0, 6]),
        (M, [0, 3, 3]),
        (C, [3, 0, 3]),
        (C, [3, 3, 0]),
    ],
    children: &[[0, 5, 4], [5, 1, 3], [3, 5, 4], [3, 2, 4]],
    c_nodes: [0, 4, 5],
};

const UNREFINED: Pattern = Pattern {
    nodes: &[(C, [6, 0, 0]), (C, [0, 6, 0]), (C, [0, 0, 6])],
    children: &[[0, 1, 2]],
    c_nodes: [0, 1, 2],
};

fn pattern(case: RefinementCase) -> &'static Pattern {
    match case {
        RefinementCase::Interior => &INTERIOR,
        RefinementCase::OneEdge => &ONE_EDGE,
        RefinementCase::TwoEdges => &TWO_EDGES,
        RefinementCase::Unrefined => &UNREFINED,
    }
}

/// Local edges of every element that lie on the substructure boundary.
pub fn boundary_edges(mesh: &SubdomainMesh) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); mesh.element_count()];
    for side in Side::ALL {
        for fe in mesh.side(side) {
            out[fe.element].push(fe.local_edge);
        }
    }
    out
}

/// Case and labels (`V1, V2, V3` as local vertex ids) of an element.
fn classify(edges: &[usize]) -> (RefinementCase, [usize; 3]) {
    let case = RefinementCase::from_boundary_count(edges.len());
    let first = match case {
        RefinementCase::OneEdge => edges[0],
        RefinementCase::TwoEdges => 3 - edges[0] - edges[1],
        _ => 0,
    };
    (case, [first, (first + 1) % 3, (first + 2) % 3])
}

/// A node of one parent refinement, with barycentric coordinates in sixths
/// in the parent's own vertex order.
#[derive(Debug, Clone, Copy)]
struct LocalNode {
    kind: NodeKind,
    sixths: [i64; 3],
}

fn local_nodes(case: RefinementCase, labels: [usize; 3]) -> Vec<LocalNode> {
    pattern(case)
        .nodes
        .iter()
        .map(|&(kind, b)| {
            let mut sixths = [0; 3];
            for r in 0..3 {
                sixths[labels[r]] = b[r];
            }
            LocalNode { kind, sixths }
        })
        .collect()
}

fn key_of(grid: &[[i64; 2]; 3], sixths: [i64; 3]) -> [i64; 2] {
    let mut k = [0; 2];
    for v in 0..3 {
        k[0] += sixths[v] * grid[v][0];
        k[1] += sixths[v] * grid[v][1];
    }
    k
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinedNode {
    /// Six times the integer grid position.
    pub key: [i64; 2],
    pub point: [f64; 2],
    pub kind: NodeKind,
    /// Parent elements containing the node.
    pub elements: Vec<usize>,
    /// Parent elements whose boundary edge contains the node.
    pub boundary_elements: Vec<usize>,
}

impl RefinedNode {
    pub fn on_boundary(&self) -> bool {
        !self.boundary_elements.is_empty()
    }
}

/// Refinement data of one parent element.
#[derive(Debug, Clone, Serialize)]
pub struct ParentRefinement {
    pub case: RefinementCase,
    /// Nodes of the parent with barycentric coordinates in its vertex order.
    pub nodes: Vec<(usize, [f64; 3])>,
    /// `C1, C2, C3`.
    pub c_nodes: [usize; 3],
    pub c_bary: [[f64; 3]; 3],
    pub children: std::ops::Range<usize>,
}

impl ParentRefinement {
    /// Barycentric coordinates of `node` in this parent.
    pub fn bary_of(&self, node: usize) -> Option<[f64; 3]> {
        self.nodes.iter().find(|(n, _)| *n == node).map(|(_, b)| *b)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Child {
    pub parent: usize,
    pub nodes: [usize; 3],
}

/// One node of a one-dimensional refinement along a side, at parameter
/// `t ∈ [0, 1]` of its fine edge.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EdgeNode {
    pub node: usize,
    pub sixths: i64,
    pub kind: NodeKind,
}

impl EdgeNode {
    pub fn t(&self) -> f64 {
        self.sixths as f64 / 6.0
    }
}

/// Refinement of one fine edge on a side, nodes sorted by parameter.
#[derive(Debug, Clone, Serialize)]
pub struct EdgeRefinement {
    pub nodes: Vec<EdgeNode>,
    /// Child triangle adjacent to each segment `(nodes[k], nodes[k+1])`.
    /// Empty for trace edges.
    pub segment_children: Vec<usize>,
}

impl EdgeRefinement {
    /// The two `C` nodes of the edge, ordered by parameter.
    pub fn c_pair(&self) -> Option<[EdgeNode; 2]> {
        let cs: Vec<EdgeNode> = self
            .nodes
            .iter()
            .copied()
            .filter(|n| n.kind == NodeKind::C)
            .collect();
        (cs.len() == 2).then(|| [cs[0], cs[1]])
    }

    /// Index into `nodes` of the segment containing a parameter given in
    /// twelfths.
    pub fn segment_at(&self, twelfths: i64) -> usize {
        let last = self.nodes.len() - 2;
        (0..=last)
            .find(|&k| 2 * self.nodes[k + 1].sixths >= twelfths)
            .unwrap_or(last)
    }

    /// Linear interpolation weights at a parameter given in twelfths.
    pub fn weights_at(&self, twelfths: i64) -> [(usize, f64); 2] {
        let k = self.segment_at(twelfths);
        let a = self.nodes[k];
        let b = self.nodes[k + 1];
        let s = (twelfths - 2 * a.sixths) as f64 / (2 * (b.sixths - a.sixths)) as f64;
        [(a.node, 1.0 - s), (b.node, s)]
    }
}

/// Trace copy of a neighbor's refined boundary along one side.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRefinement {
    pub side: Side,
    pub neighbor: usize,
    /// Index of the first trace node in the refined vector.
    pub offset: usize,
    pub kinds: Vec<NodeKind>,
    pub points: Vec<[f64; 2]>,
    /// Per fine edge; node ids are absolute indices in the refined vector.
    pub edges: Vec<EdgeRefinement>,
}

impl TraceRefinement {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }
}

/// The refined triangulation of one substructure together with the refined
/// neighbor traces, describing the layout of `W̲_i(Ω'_i)`.
#[derive(Debug, Clone, Serialize)]
pub struct RefinedMesh {
    pub subdomain: usize,
    pub m: usize,
    pub h: f64,
    pub nodes: Vec<RefinedNode>,
    pub parents: Vec<ParentRefinement>,
    pub children: Vec<Child>,
    /// Own refined boundary per side, indexed by `Side::index`.
    pub sides: [Vec<EdgeRefinement>; 4],
    /// Trace blocks per side with a neighbor.
    pub traces: [Option<TraceRefinement>; 4],
    len: usize,
}

/// Nodes of a parent refinement lying on local edge `edge`, as
/// `(pattern index, parameter in sixths)` along `endpoints`.
fn nodes_on_edge(nodes: &[LocalNode], edge: usize, endpoints: [usize; 2]) -> Vec<(usize, i64)> {
    let mut on: Vec<(usize, i64)> = nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.sixths[edge] == 0)
        .map(|(k, n)| (k, n.sixths[endpoints[1]]))
        .collect();
    on.sort_by_key(|&(_, t)| t);
    on
}

fn point_of(key: [i64; 2], denom: f64) -> [f64; 2] {
    [key[0] as f64 / (6.0 * denom), key[1] as f64 / (6.0 * denom)]
}

/// Builds the refinement of substructure `i` and its neighbor traces.
pub fn refine_subdomain(
    part: &Partition,
    meshes: &[SubdomainMesh],
    i: usize,
) -> Result<RefinedMesh> {
    let mesh = meshes
        .get(i)
        .ok_or_else(|| Error::InvalidConfig(format!("no mesh for subdomain {i}")))?;
    let denom = (part.per_side() * mesh.m) as f64;
    let bedges = boundary_edges(mesh);
    let mut index: HashMap<[i64; 2], usize> = HashMap::new();
    let mut nodes: Vec<RefinedNode> = Vec::new();
    let mut parents = Vec::with_capacity(mesh.element_count());
    let mut children = Vec::new();
    let mut local_ids: Vec<Vec<usize>> = Vec::with_capacity(mesh.element_count());
    let mut local_sets: Vec<Vec<LocalNode>> = Vec::with_capacity(mesh.element_count());

    for (e, t) in mesh.elements.iter().enumerate() {
        let (case, labels) = classify(&bedges[e]);
        let pat = pattern(case);
        let locals = local_nodes(case, labels);
        let mut ids = Vec::with_capacity(locals.len());
        for ln in &locals {
            let key = key_of(&t.grid, ln.sixths);
            let id = *index.entry(key).or_insert_with(|| {
                nodes.push(RefinedNode {
                    key,
                    point: point_of(key, denom),
                    kind: ln.kind,
                    elements: Vec::new(),
                    boundary_elements: Vec::new(),
                });
                nodes.len() - 1
            });
            if nodes[id].kind != ln.kind {
                return Err(Error::InvalidConfig(format!(
                    "refined node at {:?} typed both {:?} and {:?}",
                    key, nodes[id].kind, ln.kind
                )));
            }
            nodes[id].elements.push(e);
            ids.push(id);
        }
        let start = children.len();
        for ch in pat.children {
            let mut c = [ids[ch[0]], ids[ch[1]], ids[ch[2]]];
            // listed orientations vary; store counterclockwise
            if twice_area_int(nodes[c[0]].key, nodes[c[1]].key, nodes[c[2]].key) < 0 {
                c.swap(1, 2);
            }
            children.push(Child {
                parent: e,
                nodes: c,
            });
        }
        let bary = |ln: &LocalNode| ln.sixths.map(|s| s as f64 / 6.0);
        parents.push(ParentRefinement {
            case,
            nodes: ids
                .iter()
                .zip(&locals)
                .map(|(&id, ln)| (id, bary(ln)))
                .collect(),
            c_nodes: pat.c_nodes.map(|k| ids[k]),
            c_bary: pat.c_nodes.map(|k| bary(&locals[k])),
            children: start..children.len(),
        });
        local_ids.push(ids);
        local_sets.push(locals);
    }

    let mut sides: [Vec<EdgeRefinement>; 4] = Default::default();
    for side in Side::ALL {
        for fe in mesh.side(side) {
            let e = fe.element;
            let on = nodes_on_edge(&local_sets[e], fe.local_edge, fe.endpoints);
            let edge_nodes: Vec<EdgeNode> = on
                .iter()
                .map(|&(k, s)| EdgeNode {
                    node: local_ids[e][k],
                    sixths: s,
                    kind: local_sets[e][k].kind,
                })
                .collect();
            for n in &edge_nodes {
                nodes[n.node].boundary_elements.push(e);
            }
            let mut segment_children = Vec::with_capacity(edge_nodes.len() - 1);
            for w in edge_nodes.windows(2) {
                let child = parents[e]
                    .children
                    .clone()
                    .find(|&c| {
                        children[c].nodes.contains(&w[0].node)
                            && children[c].nodes.contains(&w[1].node)
                    })
                    .ok_or_else(|| {
                        Error::InvalidConfig("boundary segment without a child".into())
                    })?;
                segment_children.push(child);
            }
            sides[side.index()].push(EdgeRefinement {
                nodes: edge_nodes,
                segment_children,
            });
        }
    }

    let mut len = nodes.len();
    let mut traces: [Option<TraceRefinement>; 4] = Default::default();
    for side in Side::ALL {
        let Some(j) = part.neighbor(i, side) else {
            continue;
        };
        let theirs = &meshes[j];
        let their_bedges = boundary_edges(theirs);
        let offset = len;
        let mut kinds = Vec::new();
        let mut points = Vec::new();
        let mut edges = Vec::with_capacity(mesh.m);
        let mut last: Option<usize> = None;
        for fe in theirs.side(side.opposite()) {
            let t = &theirs.elements[fe.element];
            let (case, labels) = classify(&their_bedges[fe.element]);
            let locals = local_nodes(case, labels);
            let on = nodes_on_edge(&locals, fe.local_edge, fe.endpoints);
            let mut edge_nodes = Vec::with_capacity(on.len());
            for (n, &(k, s)) in on.iter().enumerate() {
                let id = match (n, last) {
                    (0, Some(prev)) => prev,
                    _ => {
                        kinds.push(locals[k].kind);
                        points.push(point_of(key_of(&t.grid, locals[k].sixths), denom));
                        offset + kinds.len() - 1
                    }
                };
                edge_nodes.push(EdgeNode {
                    node: id,
                    sixths: s,
                    kind: locals[k].kind,
                });
            }
            last = edge_nodes.last().map(|n| n.node);
            edges.push(EdgeRefinement {
                nodes: edge_nodes,
                segment_children: Vec::new(),
            });
        }
        len += kinds.len();
        traces[side.index()] = Some(TraceRefinement {
            side,
            neighbor: j,
            offset,
            kinds,
            points,
            edges,
        });
    }

    Ok(RefinedMesh {
        subdomain: i,
        m: mesh.m,
        h: mesh.h,
        nodes,
        parents,
        children,
        sides,
        traces,
        len,
    })
}

/// Outcome of the tiling and conformity checks.
#[derive(Debug, Clone, Serialize)]
pub struct TilingReport {
    /// Largest relative difference between a parent area and the sum of
    /// its children's areas.
    pub area_error: f64,
    /// Parents whose children do not tile them exactly in integer
    /// arithmetic.
    pub untiled: usize,
    pub degenerate_children: usize,
    /// Child edges shared by more than two children.
    pub overshared_edges: usize,
    /// Child edges used once but not lying on the substructure boundary.
    pub hanging_edges: usize,
    pub c_nodes_ok: bool,
}

impl TilingReport {
    pub fn is_valid(&self) -> bool {
        self.untiled == 0
            && self.degenerate_children == 0
            && self.overshared_edges == 0
            && self.hanging_edges == 0
            && self.c_nodes_ok
    }
}

fn twice_area_int(a: [i64; 2], b: [i64; 2], c: [i64; 2]) -> i128 {
    let (ax, ay) = (a[0] as i128, a[1] as i128);
    (b[0] as i128 - ax) * (c[1] as i128 - ay) - (c[0] as i128 - ax) * (b[1] as i128 - ay)
}

fn twice_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
}

impl RefinedMesh {
    /// Dimension of `W̲_i(Ω'_i)`: own nodes followed by all trace nodes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_own(&self) -> usize {
        self.nodes.len()
    }

    pub fn trace(&self, side: Side) -> Option<&TraceRefinement> {
        self.traces[side.index()].as_ref()
    }

    /// Kind of any entry of the refined vector.
    pub fn kind_of(&self, k: usize) -> NodeKind {
        if k < self.nodes.len() {
            return self.nodes[k].kind;
        }
        self.traces
            .iter()
            .flatten()
            .find(|t| k >= t.offset && k < t.offset + t.len())
            .map(|t| t.kinds[k - t.offset])
            .expect("index inside the refined vector")
    }

    /// Physical position of any entry of the refined vector.
    pub fn point_of(&self, k: usize) -> [f64; 2] {
        if k < self.nodes.len() {
            return self.nodes[k].point;
        }
        self.traces
            .iter()
            .flatten()
            .find(|t| k >= t.offset && k < t.offset + t.len())
            .map(|t| t.points[k - t.offset])
            .expect("index inside the refined vector")
    }

    pub fn child_points(&self, c: usize) -> [[f64; 2]; 3] {
        self.children[c].nodes.map(|n| self.nodes[n].point)
    }

    pub fn check_tiling(&self, mesh: &SubdomainMesh) -> TilingReport {
        let mut report = TilingReport {
            area_error: 0.0,
            untiled: 0,
            degenerate_children: 0,
            overshared_edges: 0,
            hanging_edges: 0,
            c_nodes_ok: true,
        };
        for (e, pr) in self.parents.iter().enumerate() {
            let g = mesh.elements[e].grid.map(|p| [6 * p[0], 6 * p[1]]);
            let parent_int = twice_area_int(g[0], g[1], g[2]);
            let parent = mesh.elements[e].signed_area().abs();
            let mut sum_int = 0i128;
            let mut sum = 0.0;
            for c in pr.children.clone() {
                let [a, b, d] = self.children[c].nodes.map(|n| self.nodes[n].key);
                let ai = twice_area_int(a, b, d);
                if ai <= 0 {
                    report.degenerate_children += 1;
                }
                sum_int += ai.abs();
                let [pa, pb, pd] = self.child_points(c);
                sum += 0.5 * twice_area(pa, pb, pd).abs();
            }
            if sum_int != parent_int.abs() {
                report.untiled += 1;
            }
            report.area_error = report.area_error.max((sum - parent).abs() / parent);
            let distinct: std::collections::HashSet<usize> = pr.c_nodes.iter().copied().collect();
            if distinct.len() != 3
                || pr
                    .c_nodes
                    .iter()
                    .any(|&n| self.nodes[n].kind != NodeKind::C)
            {
                report.c_nodes_ok = false;
            }
        }
        let mut uses: HashMap<(usize, usize), usize> = HashMap::new();
        for ch in &self.children {
            for k in 0..3 {
                let a = ch.nodes[k];
                let b = ch.nodes[(k + 1) % 3];
                *uses.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let o = mesh.grid_origin();
        let m = mesh.m as i64;
        let lines = [
            (1, 6 * o[1]),
            (0, 6 * (o[0] + m)),
            (1, 6 * (o[1] + m)),
            (0, 6 * o[0]),
        ];
        for (&(a, b), &count) in &uses {
            if count > 2 {
                report.overshared_edges += 1;
            } else if count == 1 {
                let ka = self.nodes[a].key;
                let kb = self.nodes[b].key;
                if !lines.iter().any(|&(ax, v)| ka[ax] == v && kb[ax] == v) {
                    report.hanging_edges += 1;
                }
            }
        }
        report
    }
}
