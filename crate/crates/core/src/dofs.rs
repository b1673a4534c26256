//! Degrees of freedom of the extended local spaces and their roles.
//!
//! Local numbering inside `W_i(Ω'_i)`: own dofs first (`3·element + vertex`),
//! then two trace copies per fine edge of every neighbor side, ordered by
//! side (bottom, right, top, left), fine-edge position and endpoint.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::Result;
use crate::mesh::{Partition, Side, SubdomainMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DofKind {
    Own {
        element: usize,
        vertex: usize,
    },
    /// Copy of an own dof of `neighbor`, living on side `side` of this
    /// subdomain.
    Trace {
        neighbor: usize,
        side: Side,
        edge: usize,
        endpoint: usize,
        source: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum DofClass {
    Interior,
    GammaOwn,
    TraceCopy,
    CornerOwn,
    CornerTrace,
}

impl DofClass {
    pub fn is_primal(self) -> bool {
        matches!(self, DofClass::CornerOwn | DofClass::CornerTrace)
    }

    pub fn is_dual(self) -> bool {
        matches!(self, DofClass::GammaOwn | DofClass::TraceCopy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DofDescriptor {
    pub subdomain: usize,
    pub kind: DofKind,
    pub location: [f64; 2],
    /// Global integer grid position, exact.
    pub grid: [i64; 2],
    pub class: DofClass,
}

/// How corner dofs are grouped into primal unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum PrimalMode {
    /// Each own corner dof is tied to its trace copies in the neighbors.
    #[default]
    Pairwise,
    /// Every corner dof at one geometric point is a single unknown.
    Merged,
}

/// The extended space `W_i(Ω'_i)` of one subdomain.
#[derive(Debug, Clone, Serialize)]
pub struct LocalSpace {
    pub subdomain: usize,
    pub n_own: usize,
    pub dofs: Vec<DofDescriptor>,
    /// First local index of the trace block of each side, if it has one.
    pub trace_offset: [Option<usize>; 4],
    pub interior: Vec<usize>,
    pub delta: Vec<usize>,
    pub primal: Vec<usize>,
    /// `Γ'_i` in local order.
    pub gamma_prime: Vec<usize>,
    /// `Γ_i`: own interface dofs, corners included.
    pub gamma_own: Vec<usize>,
}

impl LocalSpace {
    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn trace_index(&self, side: Side, edge: usize, endpoint: usize) -> Option<usize> {
        self.trace_offset[side.index()].map(|o| o + 2 * edge + endpoint)
    }
}

/// Own dofs of one subdomain, element-major.
pub fn enumerate_own_dofs(mesh: &SubdomainMesh) -> Vec<DofDescriptor> {
    let mut out = Vec::with_capacity(3 * mesh.element_count());
    for (e, t) in mesh.elements.iter().enumerate() {
        for v in 0..3 {
            out.push(DofDescriptor {
                subdomain: mesh.index,
                kind: DofKind::Own {
                    element: e,
                    vertex: v,
                },
                location: t.vertices[v],
                grid: t.grid[v],
                class: DofClass::Interior,
            });
        }
    }
    out
}

/// Classifies own dofs in place.
pub fn classify_dofs(part: &Partition, mesh: &SubdomainMesh, own: &mut [DofDescriptor]) {
    for side in Side::ALL {
        if part.neighbor(mesh.index, side).is_none() {
            continue;
        }
        for edge in mesh.side(side) {
            for &v in &edge.endpoints {
                let d = &mut own[3 * edge.element + v];
                d.class = if mesh.is_corner(d.grid) {
                    DofClass::CornerOwn
                } else {
                    DofClass::GammaOwn
                };
            }
        }
    }
}

/// Builds `W_i(Ω'_i)` for subdomain `i`.
pub fn build_extended_space(part: &Partition, meshes: &[SubdomainMesh], i: usize) -> LocalSpace {
    let mesh = &meshes[i];
    let mut dofs = enumerate_own_dofs(mesh);
    classify_dofs(part, mesh, &mut dofs);
    let n_own = dofs.len();
    let m = mesh.m;
    let mut trace_offset = [None; 4];
    for side in Side::ALL {
        let Some(j) = part.neighbor(i, side) else {
            continue;
        };
        trace_offset[side.index()] = Some(dofs.len());
        let theirs = meshes[j].side(side.opposite());
        for (k, edge) in theirs.iter().enumerate() {
            for (p, &v) in edge.endpoints.iter().enumerate() {
                let t = &meshes[j].elements[edge.element];
                let corner = (k == 0 && p == 0) || (k + 1 == m && p == 1);
                dofs.push(DofDescriptor {
                    subdomain: i,
                    kind: DofKind::Trace {
                        neighbor: j,
                        side,
                        edge: k,
                        endpoint: p,
                        source: 3 * edge.element + v,
                    },
                    location: t.vertices[v],
                    grid: t.grid[v],
                    class: if corner {
                        DofClass::CornerTrace
                    } else {
                        DofClass::TraceCopy
                    },
                });
            }
        }
    }
    let pick = |f: &dyn Fn(DofClass) -> bool| -> Vec<usize> {
        dofs.iter()
            .enumerate()
            .filter(|(_, d)| f(d.class))
            .map(|(k, _)| k)
            .collect()
    };
    let interior = pick(&|c| c == DofClass::Interior);
    let delta = pick(&|c| c.is_dual());
    let primal = pick(&|c| c.is_primal());
    let gamma_prime = pick(&|c| c != DofClass::Interior);
    let gamma_own = pick(&|c| matches!(c, DofClass::GammaOwn | DofClass::CornerOwn));
    LocalSpace {
        subdomain: i,
        n_own,
        dofs,
        trace_offset,
        interior,
        delta,
        primal,
        gamma_prime,
        gamma_own,
    }
}

/// One Lagrange multiplier: `+1` on an own dual dof, `−1` on the copy of it
/// held by the neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Multiplier {
    pub own: (usize, usize),
    pub trace: (usize, usize),
}

/// Global bookkeeping across all subdomains.
#[derive(Debug, Clone, Serialize)]
pub struct SpaceMaps {
    pub spaces: Vec<LocalSpace>,
    /// Offset of subdomain `i`'s own dofs in `X(Ω)`.
    pub own_offset: Vec<usize>,
    pub n_global: usize,
    pub primal_mode: PrimalMode,
    /// Members `(subdomain, local dof)` of each primal unknown.
    pub primal_groups: Vec<Vec<(usize, usize)>>,
    /// Primal unknown of each entry of `spaces[i].primal`.
    pub primal_of: Vec<Vec<usize>>,
    pub multipliers: Vec<Multiplier>,
    /// Multiplier row of each entry of `spaces[i].delta`.
    pub delta_row: Vec<Vec<usize>>,
    /// Sign (`±1`) of each entry of `spaces[i].delta` in its row.
    pub delta_sign: Vec<Vec<f64>>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

impl SpaceMaps {
    pub fn build(part: &Partition, meshes: &[SubdomainMesh], mode: PrimalMode) -> Result<Self> {
        let spaces: Vec<LocalSpace> = (0..part.count())
            .map(|i| build_extended_space(part, meshes, i))
            .collect();
        let mut own_offset = Vec::with_capacity(spaces.len());
        let mut n_global = 0;
        for s in &spaces {
            own_offset.push(n_global);
            n_global += s.n_own;
        }

        let (primal_groups, primal_of) = build_primal_groups(&spaces, mode);
        let (multipliers, delta_row, delta_sign) = build_jump_index(part, meshes, &spaces);
        Ok(Self {
            spaces,
            own_offset,
            n_global,
            primal_mode: mode,
            primal_groups,
            primal_of,
            multipliers,
            delta_row,
            delta_sign,
        })
    }

    pub fn n_primal(&self) -> usize {
        self.primal_groups.len()
    }

    pub fn n_multipliers(&self) -> usize {
        self.multipliers.len()
    }

    /// Index in `X(Ω)` of the value a local dof represents.
    pub fn global_of(&self, i: usize, local: usize) -> usize {
        let d = &self.spaces[i].dofs[local];
        match d.kind {
            DofKind::Own { .. } => self.own_offset[i] + local,
            DofKind::Trace {
                neighbor, source, ..
            } => self.own_offset[neighbor] + source,
        }
    }

    /// Restriction `R_{Ω'_i}`: a global vector on `X(Ω)` to `W_i(Ω'_i)`.
    pub fn restrict(&self, i: usize, global: &[f64]) -> Vec<f64> {
        (0..self.spaces[i].len())
            .map(|k| global[self.global_of(i, k)])
            .collect()
    }

    /// Classification dump as JSON.
    pub fn classification_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Entry<'a> {
            subdomain: usize,
            local: usize,
            global: usize,
            class: DofClass,
            kind: &'a DofKind,
            location: [f64; 2],
        }
        let mut entries = Vec::new();
        for (i, s) in self.spaces.iter().enumerate() {
            for (k, d) in s.dofs.iter().enumerate() {
                entries.push(Entry {
                    subdomain: i,
                    local: k,
                    global: self.global_of(i, k),
                    class: d.class,
                    kind: &d.kind,
                    location: d.location,
                });
            }
        }
        Ok(serde_json::to_string_pretty(&entries)?)
    }
}

/// Per primal unknown its `(subdomain, local dof)` members, and per subdomain
/// the primal id of each entry of `LocalSpace::primal`.
pub type PrimalGroups = (Vec<Vec<(usize, usize)>>, Vec<Vec<usize>>);

/// Forms the primal unknowns from all `V'` dofs.
pub fn build_primal_groups(spaces: &[LocalSpace], mode: PrimalMode) -> PrimalGroups {
    let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut members = Vec::new();
    for (i, s) in spaces.iter().enumerate() {
        for &k in &s.primal {
            ids.insert((i, k), members.len());
            members.push((i, k));
        }
    }
    let mut uf = UnionFind((0..members.len()).collect());
    for (idx, &(i, k)) in members.iter().enumerate() {
        if let DofKind::Trace {
            neighbor, source, ..
        } = spaces[i].dofs[k].kind
        {
            uf.union(idx, ids[&(neighbor, source)]);
        }
    }
    if mode == PrimalMode::Merged {
        let mut by_point: HashMap<[i64; 2], usize> = HashMap::new();
        for (idx, &(i, k)) in members.iter().enumerate() {
            let g = spaces[i].dofs[k].grid;
            match by_point.get(&g) {
                Some(&first) => uf.union(first, idx),
                None => {
                    by_point.insert(g, idx);
                }
            }
        }
    }
    let mut root_to_group: HashMap<usize, usize> = HashMap::new();
    let mut groups: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut primal_of: Vec<Vec<usize>> = spaces.iter().map(|s| vec![0; s.primal.len()]).collect();
    for (idx, &(i, k)) in members.iter().enumerate() {
        let root = uf.find(idx);
        let g = *root_to_group.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push((i, k));
        let pos = spaces[i]
            .primal
            .binary_search(&k)
            .expect("primal dof listed");
        primal_of[i][pos] = g;
    }
    (groups, primal_of)
}

/// One multiplier per own dual dof, in (subdomain, side, fine node) order.
#[allow(clippy::type_complexity)]
pub fn build_jump_index(
    part: &Partition,
    meshes: &[SubdomainMesh],
    spaces: &[LocalSpace],
) -> (Vec<Multiplier>, Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let mut rows = Vec::new();
    let mut delta_row: Vec<Vec<usize>> = spaces
        .iter()
        .map(|s| vec![usize::MAX; s.delta.len()])
        .collect();
    let mut delta_sign: Vec<Vec<f64>> = spaces.iter().map(|s| vec![0.0; s.delta.len()]).collect();
    let pos = |i: usize, k: usize| spaces[i].delta.binary_search(&k).expect("dual dof listed");
    for (i, mesh) in meshes.iter().enumerate() {
        for side in Side::ALL {
            let Some(j) = part.neighbor(i, side) else {
                continue;
            };
            for (k, edge) in mesh.side(side).iter().enumerate() {
                for (p, &v) in edge.endpoints.iter().enumerate() {
                    let own = 3 * edge.element + v;
                    if spaces[i].dofs[own].class != DofClass::GammaOwn {
                        continue;
                    }
                    let trace = spaces[j]
                        .trace_index(side.opposite(), k, p)
                        .expect("neighbor holds a trace block");
                    let r = rows.len();
                    rows.push(Multiplier {
                        own: (i, own),
                        trace: (j, trace),
                    });
                    let a = pos(i, own);
                    delta_row[i][a] = r;
                    delta_sign[i][a] = 1.0;
                    let b = pos(j, trace);
                    delta_row[j][b] = r;
                    delta_sign[j][b] = -1.0;
                }
            }
        }
    }
    (rows, delta_row, delta_sign)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_partition, triangulate_all};

    fn maps(n: usize, m: usize, mode: PrimalMode) -> SpaceMaps {
        let p = build_partition(n).unwrap();
        let meshes = triangulate_all(&p, m).unwrap();
        SpaceMaps::build(&p, &meshes, mode).unwrap()
    }

    fn count(s: &LocalSpace, c: DofClass) -> usize {
        s.dofs.iter().filter(|d| d.class == c).count()
    }

    #[test]
    fn interior_subdomain_sizes() {
        let sm = maps(3, 4, PrimalMode::Pairwise);
        let s = &sm.spaces[4];
        assert_eq!(s.n_own, 96);
        assert_eq!(s.len(), 128);
        // 8 own Γ' dofs per macro edge, shared corners counted once
        let own_gamma = count(s, DofClass::GammaOwn) + count(s, DofClass::CornerOwn);
        assert_eq!(count(s, DofClass::GammaOwn), 4 * 6);
        assert_eq!(own_gamma, 4 * 6 + 6);
        assert_eq!(count(s, DofClass::TraceCopy), 4 * 6);
        assert_eq!(count(s, DofClass::CornerTrace), 4 * 2);
    }

    #[test]
    fn partition_of_local_dofs() {
        let sm = maps(3, 3, PrimalMode::Pairwise);
        for s in &sm.spaces {
            let mut all: Vec<usize> = s
                .interior
                .iter()
                .chain(&s.delta)
                .chain(&s.primal)
                .copied()
                .collect();
            all.sort();
            assert_eq!(all, (0..s.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn vertex_touching_elements_are_interior() {
        let p = build_partition(2).unwrap();
        let meshes = triangulate_all(&p, 4).unwrap();
        let s = build_extended_space(&p, &meshes, 3);
        // subdomain 3 has interior bottom and left sides; the upper triangle
        // of cell (0,1) touches the bottom side at one vertex only
        let up = meshes[3].upper(0, 1);
        for v in 0..3 {
            assert_eq!(s.dofs[3 * up + v].class, DofClass::Interior);
        }
        // the top and right sides lie on ∂Ω
        let top = meshes[3].upper(3, 1);
        assert_eq!(s.dofs[3 * top + 2].class, DofClass::Interior);
    }

    #[test]
    fn trace_positions_match_sources() {
        let sm = maps(3, 3, PrimalMode::Pairwise);
        for s in &sm.spaces {
            for d in &s.dofs {
                if let DofKind::Trace {
                    neighbor, source, ..
                } = d.kind
                {
                    let src = &sm.spaces[neighbor].dofs[source];
                    assert_eq!(src.location, d.location);
                    assert!(matches!(
                        src.class,
                        DofClass::GammaOwn | DofClass::CornerOwn
                    ));
                    assert_eq!(d.class.is_primal(), src.class.is_primal());
                }
            }
        }
    }

    #[test]
    fn multiplier_rows_cover_dual_dofs_once() {
        let sm = maps(2, 2, PrimalMode::Pairwise);
        let own_dual: usize = sm.spaces.iter().map(|s| count(s, DofClass::GammaOwn)).sum();
        assert_eq!(sm.n_multipliers(), own_dual);
        let mut hits = vec![0; sm.n_multipliers()];
        for (i, s) in sm.spaces.iter().enumerate() {
            for (a, &r) in sm.delta_row[i].iter().enumerate() {
                assert_ne!(r, usize::MAX);
                hits[r] += 1;
                let _ = s.delta[a];
            }
        }
        assert!(hits.iter().all(|&h| h == 2));
    }

    #[test]
    fn interior_macro_edge_has_six_rows_per_side() {
        let sm = maps(2, 4, PrimalMode::Pairwise);
        let from0 = sm
            .multipliers
            .iter()
            .filter(|r| r.own.0 == 0 && r.trace.0 == 1)
            .count();
        let from1 = sm
            .multipliers
            .iter()
            .filter(|r| r.own.0 == 1 && r.trace.0 == 0)
            .count();
        assert_eq!((from0, from1), (6, 6));
    }

    #[test]
    fn primal_groups() {
        let pair = maps(2, 2, PrimalMode::Pairwise);
        let merged = maps(2, 2, PrimalMode::Merged);
        let centre = [2i64, 2];
        let at = |sm: &SpaceMaps| -> Vec<usize> {
            sm.primal_groups
                .iter()
                .filter(|g| g.iter().all(|&(i, k)| sm.spaces[i].dofs[k].grid == centre))
                .map(Vec::len)
                .collect()
        };
        // 6 own corner dofs meet at the cross point, with 8 copies
        let mut p = at(&pair);
        p.sort();
        assert_eq!(p, vec![2, 2, 2, 2, 3, 3]);
        assert_eq!(at(&merged), vec![14]);
        // endpoint of an interior macro edge on ∂Ω
        let edge_end = [2i64, 0];
        let n: Vec<usize> = merged
            .primal_groups
            .iter()
            .filter(|g| {
                g.iter()
                    .all(|&(i, k)| merged.spaces[i].dofs[k].grid == edge_end)
            })
            .map(Vec::len)
            .collect();
        assert_eq!(n, vec![4]);
    }
}
