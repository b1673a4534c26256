//! Uniform `M × M` partition of the unit square and the structured
//! triangulation of each substructure.
//!
//! Every cell of a substructure is split along its lower-left to upper-right
//! diagonal. Element `2·(r·m + c)` is the lower triangle of cell `(r, c)`,
//! element `2·(r·m + c) + 1` the upper one:
//!
//! ```text
//!  (x0,y1) 2-------1 (x1,y1)      lower: v0=(x0,y0) v1=(x1,y0) v2=(x1,y1)
//!          | up  .'|              upper: v0=(x0,y0) v1=(x1,y1) v2=(x0,y1)
//!          |   .'  |
//!          | .' low|              local edge k is opposite local vertex k
//!  (x0,y0) 0-------1 (x1,y0)
//! ```
//!
//! Vertex coordinates are computed from global integer grid positions so
//! coincident vertices of different substructures are bitwise equal.

use serde::Serialize;

use crate::error::{Error, Result};

/// Side of a square substructure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn index(self) -> usize {
        match self {
            Side::Bottom => 0,
            Side::Right => 1,
            Side::Top => 2,
            Side::Left => 3,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Bottom => Side::Top,
            Side::Right => Side::Left,
            Side::Top => Side::Bottom,
            Side::Left => Side::Right,
        }
    }

    /// True for sides that run along the x axis.
    pub fn is_horizontal(self) -> bool {
        matches!(self, Side::Bottom | Side::Top)
    }
}

/// Geometrically conforming partition of the unit square.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    n: usize,
}

/// Builds the `M × M` partition.
pub fn build_partition(n: usize) -> Result<Partition> {
    if n == 0 {
        return Err(Error::InvalidConfig(
            "number of subdomains per side must be at least 1".into(),
        ));
    }
    Ok(Partition { n })
}

impl Partition {
    pub fn per_side(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> usize {
        self.n * self.n
    }

    pub fn h_macro(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `(row, col)` of subdomain `i`, row 0 at the bottom.
    pub fn row_col(&self, i: usize) -> (usize, usize) {
        (i / self.n, i % self.n)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.n + col
    }

    /// Neighbor across `side`, or `None` on `∂Ω`.
    pub fn neighbor(&self, i: usize, side: Side) -> Option<usize> {
        let (r, c) = self.row_col(i);
        match side {
            Side::Bottom => (r > 0).then(|| self.index(r - 1, c)),
            Side::Top => (r + 1 < self.n).then(|| self.index(r + 1, c)),
            Side::Left => (c > 0).then(|| self.index(r, c - 1)),
            Side::Right => (c + 1 < self.n).then(|| self.index(r, c + 1)),
        }
    }

    pub fn neighbors(&self, i: usize) -> Vec<(Side, usize)> {
        Side::ALL
            .iter()
            .filter_map(|&s| self.neighbor(i, s).map(|j| (s, j)))
            .collect()
    }

    /// Closed-set intersection type of two subdomains.
    pub fn intersection(&self, i: usize, j: usize) -> Intersection {
        let (ri, ci) = self.row_col(i);
        let (rj, cj) = self.row_col(j);
        let dr = ri.abs_diff(rj);
        let dc = ci.abs_diff(cj);
        match (dr, dc) {
            (0, 0) => Intersection::Same,
            (0, 1) | (1, 0) => Intersection::Edge,
            (1, 1) => Intersection::Corner,
            _ => Intersection::Empty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intersection {
    Same,
    Edge,
    Corner,
    Empty,
}

/// One triangle with counterclockwise vertices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Triangle {
    pub vertices: [[f64; 2]; 3],
    /// Global integer grid positions; the physical coordinate is
    /// `grid / (M·m)`.
    pub grid: [[i64; 2]; 3],
}

impl Triangle {
    pub fn signed_area(&self) -> f64 {
        let [a, b, c] = self.vertices;
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Local vertex ids of edge `k` (opposite vertex `k`), in
    /// counterclockwise order.
    pub fn edge_vertices(k: usize) -> [usize; 2] {
        [(k + 1) % 3, (k + 2) % 3]
    }

    pub fn edge_length(&self, k: usize) -> f64 {
        let [a, b] = Self::edge_vertices(k);
        let p = self.vertices[a];
        let q = self.vertices[b];
        ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
    }

    /// Unit outward normal of edge `k`.
    pub fn outward_normal(&self, k: usize) -> [f64; 2] {
        let [a, b] = Self::edge_vertices(k);
        let p = self.vertices[a];
        let q = self.vertices[b];
        let len = self.edge_length(k);
        [(q[1] - p[1]) / len, -(q[0] - p[0]) / len]
    }

    /// Gradients of the three barycentric basis functions.
    pub fn basis_gradients(&self) -> Result<[[f64; 2]; 3]> {
        let area = self.signed_area();
        if area.abs() <= 1e-300 {
            return Err(Error::DegenerateElement(area));
        }
        let v = self.vertices;
        let mut g = [[0.0; 2]; 3];
        for k in 0..3 {
            let [a, b] = Self::edge_vertices(k);
            g[k] = [
                (v[a][1] - v[b][1]) / (2.0 * area),
                (v[b][0] - v[a][0]) / (2.0 * area),
            ];
        }
        Ok(g)
    }

    /// Maps barycentric coordinates to a physical point.
    pub fn point(&self, bary: [f64; 3]) -> [f64; 2] {
        let v = self.vertices;
        [
            bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
            bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
        ]
    }
}

/// Element edge lying on the boundary of a substructure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FineEdge {
    pub element: usize,
    pub local_edge: usize,
    /// Local vertex ids of the endpoints, ordered by increasing coordinate
    /// along the side.
    pub endpoints: [usize; 2],
    pub coords: [[f64; 2]; 2],
    pub length: f64,
}

/// Element edge shared by two elements of the same substructure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InteriorEdge {
    pub plus: (usize, usize),
    pub minus: (usize, usize),
}

/// Structured triangulation of one substructure.
#[derive(Debug, Clone, Serialize)]
pub struct SubdomainMesh {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub m: usize,
    pub h: f64,
    pub elements: Vec<Triangle>,
    /// Boundary fine edges per side, indexed by `Side::index`, each list
    /// ordered by increasing coordinate.
    pub sides: [Vec<FineEdge>; 4],
    pub interior_edges: Vec<InteriorEdge>,
}

impl SubdomainMesh {
    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    pub fn lower(&self, r: usize, c: usize) -> usize {
        2 * (r * self.m + c)
    }

    pub fn upper(&self, r: usize, c: usize) -> usize {
        2 * (r * self.m + c) + 1
    }

    pub fn side(&self, side: Side) -> &[FineEdge] {
        &self.sides[side.index()]
    }

    /// Integer grid position of the lower-left corner of the substructure.
    pub fn grid_origin(&self) -> [i64; 2] {
        [(self.col * self.m) as i64, (self.row * self.m) as i64]
    }

    /// True when `grid` is one of the four corners of the substructure.
    pub fn is_corner(&self, grid: [i64; 2]) -> bool {
        let o = self.grid_origin();
        let m = self.m as i64;
        (grid[0] == o[0] || grid[0] == o[0] + m) && (grid[1] == o[1] || grid[1] == o[1] + m)
    }
}

/// Triangulates subdomain `i` with `m` intervals per side.
pub fn triangulate_subdomain(part: &Partition, i: usize, m: usize) -> Result<SubdomainMesh> {
    if m == 0 {
        return Err(Error::InvalidConfig(
            "intervals per subdomain side must be at least 1".into(),
        ));
    }
    if i >= part.count() {
        return Err(Error::InvalidConfig(format!(
            "subdomain index {i} out of range for {} subdomains",
            part.count()
        )));
    }
    let (row, col) = part.row_col(i);
    let denom = (part.per_side() * m) as f64;
    let gx0 = (col * m) as i64;
    let gy0 = (row * m) as i64;
    let coord = |g: [i64; 2]| [g[0] as f64 / denom, g[1] as f64 / denom];

    let mut elements = Vec::with_capacity(2 * m * m);
    for r in 0..m {
        for c in 0..m {
            let p00 = [gx0 + c as i64, gy0 + r as i64];
            let p10 = [p00[0] + 1, p00[1]];
            let p11 = [p00[0] + 1, p00[1] + 1];
            let p01 = [p00[0], p00[1] + 1];
            for grid in [[p00, p10, p11], [p00, p11, p01]] {
                elements.push(Triangle {
                    vertices: [coord(grid[0]), coord(grid[1]), coord(grid[2])],
                    grid,
                });
            }
        }
    }

    let lower = |r: usize, c: usize| 2 * (r * m + c);
    let upper = |r: usize, c: usize| 2 * (r * m + c) + 1;
    let fine = |element: usize, local_edge: usize, endpoints: [usize; 2]| {
        let t: &Triangle = &elements[element];
        FineEdge {
            element,
            local_edge,
            endpoints,
            coords: [t.vertices[endpoints[0]], t.vertices[endpoints[1]]],
            length: t.edge_length(local_edge),
        }
    };
    let sides = [
        (0..m).map(|k| fine(lower(0, k), 2, [0, 1])).collect(),
        (0..m).map(|k| fine(lower(k, m - 1), 0, [1, 2])).collect(),
        (0..m).map(|k| fine(upper(m - 1, k), 0, [2, 1])).collect(),
        (0..m).map(|k| fine(upper(k, 0), 1, [0, 2])).collect(),
    ];

    let mut interior_edges = Vec::with_capacity(3 * m * m);
    for r in 0..m {
        for c in 0..m {
            interior_edges.push(InteriorEdge {
                plus: (lower(r, c), 1),
                minus: (upper(r, c), 2),
            });
            if c + 1 < m {
                interior_edges.push(InteriorEdge {
                    plus: (lower(r, c), 0),
                    minus: (upper(r, c + 1), 1),
                });
            }
            if r + 1 < m {
                interior_edges.push(InteriorEdge {
                    plus: (upper(r, c), 0),
                    minus: (lower(r + 1, c), 2),
                });
            }
        }
    }

    Ok(SubdomainMesh {
        index: i,
        row,
        col,
        m,
        h: 1.0 / denom,
        elements,
        sides,
        interior_edges,
    })
}

/// Triangulates every subdomain with the same `m`.
pub fn triangulate_all(part: &Partition, m: usize) -> Result<Vec<SubdomainMesh>> {
    (0..part.count())
        .map(|i| triangulate_subdomain(part, i, m))
        .collect()
}

/// One macro edge seen from its owner subdomain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacroEdgePair {
    pub owner: usize,
    pub side: Side,
    /// Neighbor on the other side, `None` on `∂Ω`.
    pub neighbor: Option<usize>,
    pub segment: [[f64; 2]; 2],
    /// Owner-side fine edges, as indices into `sides[side]`.
    pub owner_edges: Vec<usize>,
    /// Neighbor-side fine edges, as indices into the neighbor's opposite side.
    pub neighbor_edges: Vec<usize>,
    pub matched: bool,
}

impl MacroEdgePair {
    /// Weight `l` of the interface terms: 2 inside `Ω`, 1 on `∂Ω`.
    pub fn weight(&self) -> f64 {
        if self.neighbor.is_some() {
            2.0
        } else {
            1.0
        }
    }
}

/// Lists every macro edge once per owner and checks mesh matching.
pub fn enumerate_interface(
    part: &Partition,
    meshes: &[SubdomainMesh],
) -> Result<Vec<MacroEdgePair>> {
    if meshes.len() != part.count() {
        return Err(Error::DimensionMismatch {
            expected: part.count(),
            actual: meshes.len(),
        });
    }
    let mut out = Vec::new();
    for mesh in meshes {
        for side in Side::ALL {
            let own = mesh.side(side);
            let segment = [own[0].coords[0], own[own.len() - 1].coords[1]];
            let owner_edges: Vec<usize> = (0..own.len()).collect();
            match part.neighbor(mesh.index, side) {
                None => out.push(MacroEdgePair {
                    owner: mesh.index,
                    side,
                    neighbor: None,
                    segment,
                    owner_edges,
                    neighbor_edges: Vec::new(),
                    matched: true,
                }),
                Some(j) => {
                    let other = &meshes[j];
                    if other.m != mesh.m {
                        return Err(Error::MatchingViolation {
                            first: mesh.index,
                            second: j,
                            first_m: mesh.m,
                            second_m: other.m,
                        });
                    }
                    let theirs = other.side(side.opposite());
                    let matched = own.iter().zip(theirs).all(|(a, b)| a.coords == b.coords);
                    if !matched {
                        return Err(Error::MatchingViolation {
                            first: mesh.index,
                            second: j,
                            first_m: mesh.m,
                            second_m: other.m,
                        });
                    }
                    out.push(MacroEdgePair {
                        owner: mesh.index,
                        side,
                        neighbor: Some(j),
                        segment,
                        owner_edges,
                        neighbor_edges: (0..theirs.len()).collect(),
                        matched,
                    });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_counts() {
        assert!(build_partition(0).is_err());
        let p = build_partition(8).unwrap();
        assert_eq!(p.count(), 64);
        let inner = p.index(3, 4);
        assert_eq!(p.neighbors(inner).len(), 4);
        let p4 = build_partition(4).unwrap();
        assert_eq!(p4.neighbors(0).len(), 2);
        assert_eq!(p4.intersection(0, 5), Intersection::Corner);
        assert_eq!(p4.intersection(0, 2), Intersection::Empty);
    }

    #[test]
    fn element_and_edge_counts() {
        let p = build_partition(2).unwrap();
        let mesh = triangulate_subdomain(&p, 3, 4).unwrap();
        assert_eq!(mesh.element_count(), 32);
        let boundary: usize = mesh.sides.iter().map(Vec::len).sum();
        assert_eq!(boundary, 16);
        assert_eq!(mesh.interior_edges.len(), 3 * 16 - 2 * 4);
        for t in &mesh.elements {
            assert!((t.signed_area() - mesh.h * mesh.h / 2.0).abs() < 1e-15);
        }
        assert_eq!(triangulate_subdomain(&p, 0, 1).unwrap().element_count(), 2);
    }

    #[test]
    fn side_edges_lie_on_sides() {
        let p = build_partition(3).unwrap();
        let mesh = triangulate_subdomain(&p, 4, 3).unwrap();
        let x0 = 1.0 / 3.0;
        let x1 = 2.0 / 3.0;
        for side in Side::ALL {
            let edges = mesh.side(side);
            let mut total = 0.0;
            for (k, e) in edges.iter().enumerate() {
                total += e.length;
                let fixed = match side {
                    Side::Bottom => e.coords.iter().all(|c| c[1] == x0),
                    Side::Top => e.coords.iter().all(|c| c[1] == x1),
                    Side::Left => e.coords.iter().all(|c| c[0] == x0),
                    Side::Right => e.coords.iter().all(|c| c[0] == x1),
                };
                assert!(fixed, "{side:?} edge {k}");
                let axis = usize::from(!side.is_horizontal());
                assert!(e.coords[0][axis] < e.coords[1][axis]);
                if k > 0 {
                    assert_eq!(edges[k - 1].coords[1], e.coords[0]);
                }
            }
            assert!((total - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn interior_edges_coincide() {
        let p = build_partition(1).unwrap();
        let mesh = triangulate_subdomain(&p, 0, 3).unwrap();
        for e in &mesh.interior_edges {
            let ta = &mesh.elements[e.plus.0];
            let tb = &mesh.elements[e.minus.0];
            let mut a: Vec<_> = Triangle::edge_vertices(e.plus.1)
                .iter()
                .map(|&v| ta.grid[v])
                .collect();
            let mut b: Vec<_> = Triangle::edge_vertices(e.minus.1)
                .iter()
                .map(|&v| tb.grid[v])
                .collect();
            a.sort();
            b.sort();
            assert_eq!(a, b);
            let na = ta.outward_normal(e.plus.1);
            let nb = tb.outward_normal(e.minus.1);
            assert!((na[0] + nb[0]).abs() < 1e-15 && (na[1] + nb[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn interface_pairs() {
        let p = build_partition(2).unwrap();
        let meshes = triangulate_all(&p, 4).unwrap();
        let pairs = enumerate_interface(&p, &meshes).unwrap();
        let interior: Vec<_> = pairs.iter().filter(|q| q.neighbor.is_some()).collect();
        assert_eq!(interior.len(), 8);
        assert!(interior
            .iter()
            .all(|q| q.matched && q.owner_edges.len() == 4));
        assert!(pairs
            .iter()
            .filter(|q| q.neighbor.is_none())
            .all(|q| q.weight() == 1.0));

        let mut bad = meshes.clone();
        bad[1] = triangulate_subdomain(&p, 1, 8).unwrap();
        assert!(matches!(
            enumerate_interface(&p, &bad),
            Err(Error::MatchingViolation { .. })
        ));
    }
}
