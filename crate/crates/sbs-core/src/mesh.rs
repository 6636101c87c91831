//! Graded conforming triangulation of a translation surface.
//!
//! Each polygon is meshed in its own chart; paired boundary edges receive the
//! same 1-D subdivision (copied by the pairing translation) so that boundary
//! nodes match node-for-node and can share degrees of freedom. Element size
//! follows h·(r/R)^β toward each cone point, clamped below by h_min.
//!
//! Interior points come from concentric rings around cone corners plus a
//! hexagonal lattice in the far field; spade's constrained Delaunay
//! triangulation with angle-limited refinement fills the gaps without ever
//! splitting boundary (constraint) edges, which keeps the pairing match
//! exact.

use crate::geom::{self, Cx};
use crate::surface::TranslationSurface;
use serde::Serialize;
use spade::{
    AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh parameters: {0}")]
    BadParams(String),
    #[error("unmeshable input: {0}")]
    Unmeshable(String),
    #[error("mesh invariant violated after generation: {0}")]
    InvariantViolation(String),
}

/// One mesh node: chart position plus owning polygon.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MeshNode {
    pub re: f64,
    pub im: f64,
    pub poly: usize,
}

impl MeshNode {
    pub fn pos(&self) -> Cx {
        Cx::new(self.re, self.im)
    }
}

/// A polygon corner belonging to a cone class.
#[derive(Clone, Copy, Debug)]
pub struct ConeCorner {
    pub poly: usize,
    pub vertex: usize,
    pub pos: Cx,
    /// Unit direction of the outgoing polygon edge at this corner.
    pub dir_out: Cx,
    /// Interior wedge angle at this corner.
    pub angle: f64,
    /// Mesh node sitting at this corner.
    pub node: usize,
}

/// Cone point data carried by the mesh (one entry per zero of ρ).
#[derive(Clone, Debug)]
pub struct MeshCone {
    /// Vertex class index in the originating surface.
    pub class: usize,
    /// Zero order d ≥ 1.
    pub order: usize,
    /// Cutoff / injectivity radius for the singular profile.
    pub cutoff_radius: f64,
    pub corners: Vec<ConeCorner>,
}

/// Matched node chains on the two sides of a pairing (index-aligned:
/// `side_a[k]` and `side_b[k]` are identified).
#[derive(Clone, Debug)]
pub struct BoundaryChain {
    pub pairing: usize,
    pub side_a: Vec<usize>,
    pub side_b: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub nodes: Vec<MeshNode>,
    /// Positively oriented node triples.
    pub triangles: Vec<[usize; 3]>,
    /// Owning polygon per triangle.
    pub tri_poly: Vec<usize>,
    /// Degree-of-freedom class per node (surface points, not chart points).
    pub dof_of_node: Vec<usize>,
    pub num_dofs: usize,
    pub cones: Vec<MeshCone>,
    /// True for nodes sitting at cone corners.
    pub cone_node: Vec<bool>,
    pub chains: Vec<BoundaryChain>,
    pub polygons: Vec<Vec<Cx>>,
    pub h: f64,
    pub h_min: f64,
    pub beta: f64,
    pub diameter: f64,
    locator: TriLocator,
}

/// Element size at flat distance `r` from a cone with cutoff `rc`.
fn graded_size(h: f64, h_min: f64, beta: f64, r: f64, rc: f64) -> f64 {
    if r >= rc {
        h
    } else {
        (h * (r / rc).powf(beta)).clamp(h_min, h)
    }
}

/// Size field for one polygon: h away from cones, graded within each cone's
/// cutoff radius.
#[derive(Clone, Debug)]
struct SizeField {
    h: f64,
    h_min: f64,
    beta: f64,
    /// (corner position, cutoff radius) for cone corners of this polygon.
    corners: Vec<(Cx, f64)>,
}

impl SizeField {
    fn size(&self, x: Cx) -> f64 {
        let mut s = self.h;
        for (c, rc) in &self.corners {
            s = s.min(graded_size(self.h, self.h_min, self.beta, (x - c).norm(), *rc));
        }
        s
    }
}

impl Mesh {
    /// Graded triangulation of a validated surface.
    pub fn triangulate(
        surface: &TranslationSurface,
        h: f64,
        beta: f64,
        h_min: f64,
    ) -> Result<Self, MeshError> {
        if !(h > 0.0) {
            return Err(MeshError::BadParams(format!("h must be positive, got {h}")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(MeshError::BadParams(format!("β must lie in [0, 1], got {beta}")));
        }
        if !(h_min > 0.0 && h_min < h) {
            return Err(MeshError::BadParams(format!(
                "need 0 < h_min < h, got h_min = {h_min}, h = {h}"
            )));
        }

        let cones = cone_data(surface);
        let size_fields: Vec<SizeField> = (0..surface.polygons.len())
            .map(|p| SizeField {
                h,
                h_min,
                beta,
                corners: cones
                    .iter()
                    .flat_map(|c| {
                        c.corners
                            .iter()
                            .filter(|cc| cc.poly == p)
                            .map(|cc| (cc.pos, c.cutoff_radius))
                    })
                    .collect(),
            })
            .collect();

        // 1. matched boundary subdivisions, one per pairing
        let mut subdivision: Vec<Vec<f64>> = Vec::with_capacity(surface.pairings.len());
        for (a, _b) in &surface.pairings {
            let (a0, a1) = surface.edge_endpoints(*a);
            subdivision.push(subdivide_edge(a0, a1, &size_fields[a.poly]));
        }

        // 2. per-polygon point sets and CDTs
        let mut nodes: Vec<MeshNode> = Vec::new();
        let mut triangles: Vec<[usize; 3]> = Vec::new();
        let mut tri_poly: Vec<usize> = Vec::new();
        // node ids: per polygon corner, and per pairing side
        let mut corner_node: Vec<Vec<usize>> = surface
            .polygons
            .iter()
            .map(|p| vec![usize::MAX; p.len()])
            .collect();
        let mut chain_nodes: Vec<(Vec<usize>, Vec<usize>)> =
            vec![(Vec::new(), Vec::new()); surface.pairings.len()];

        for (p, poly) in surface.polygons.iter().enumerate() {
            let base = nodes.len();
            let n = poly.len();
            let sf = &size_fields[p];

            let mut pts: Vec<Cx> = Vec::new();
            let mut constraints: Vec<[usize; 2]> = Vec::new();
            // polygon-edge membership per local point (corners touch two edges);
            // used to drop sliver faces whose nodes are collinear on one edge
            let mut pt_edges: Vec<[usize; 2]> = Vec::new();
            for (v, z) in poly.iter().enumerate() {
                corner_node[p][v] = base + pts.len();
                pts.push(*z);
                pt_edges.push([(v + n - 1) % n, v]);
            }
            // boundary subdivision nodes (interior points of each edge)
            for (e, _) in poly.iter().enumerate() {
                let k = surface.pairing_of_edge[p][e];
                if k == usize::MAX {
                    return Err(MeshError::Unmeshable(format!(
                        "edge ({p}, {e}) is unpaired"
                    )));
                }
                let (pa, _pb) = surface.pairings[k];
                let is_side_a = pa.poly == p && pa.edge == e;
                let (a0, a1) = (poly[e], poly[(e + 1) % n]);
                let fracs = &subdivision[k];
                // side a carries the point at fraction t from its tail; side b
                // carries the translated image, which sits at fraction t from
                // its *head* (pairings reverse the traversal)
                let mut edge_chain: Vec<usize> = vec![corner_node[p][e]];
                for i in 0..fracs.len() {
                    let t = if is_side_a {
                        fracs[i]
                    } else {
                        fracs[fracs.len() - 1 - i]
                    };
                    let zt = if is_side_a {
                        a0 + (a1 - a0) * t
                    } else {
                        a1 + (a0 - a1) * t
                    };
                    edge_chain.push(base + pts.len());
                    pts.push(zt);
                    pt_edges.push([e, usize::MAX]);
                }
                edge_chain.push(corner_node[p][(e + 1) % n]);
                for w in edge_chain.windows(2) {
                    constraints.push([w[0] - base, w[1] - base]);
                }
                // record the chain indexed by fraction order so the two sides align
                let interior = &edge_chain[1..edge_chain.len() - 1];
                let class_head = corner_node[p][if is_side_a { e } else { (e + 1) % n }];
                let class_tail = corner_node[p][if is_side_a { (e + 1) % n } else { e }];
                let mut aligned = vec![class_head];
                if is_side_a {
                    aligned.extend_from_slice(interior);
                } else {
                    aligned.extend(interior.iter().rev());
                }
                aligned.push(class_tail);
                if is_side_a {
                    chain_nodes[k].0 = aligned;
                } else {
                    chain_nodes[k].1 = aligned;
                }
            }

            // cone rings
            let mut ring_pts: Vec<Cx> = Vec::new();
            for cone in &cones {
                for cc in cone.corners.iter().filter(|cc| cc.poly == p) {
                    ring_points(cc, cone.cutoff_radius, sf, poly, &mut ring_pts);
                }
            }

            // first interior layer along each boundary edge
            let n_boundary = pts.len();
            for e in 0..n {
                let chain: Vec<Cx> = (0..n_boundary)
                    .filter(|&i| {
                        pt_edges[i][0] == e || pt_edges[i][1] == e
                    })
                    .map(|i| pts[i])
                    .collect();
                // order along the edge by parameter
                let a0 = poly[e];
                let dir = poly[(e + 1) % n] - a0;
                let mut chain = chain;
                chain.sort_by(|x, y| {
                    let tx = geom::dot(*x - a0, dir);
                    let ty = geom::dot(*y - a0, dir);
                    tx.partial_cmp(&ty).unwrap()
                });
                boundary_offset_points(&chain, sf, &ring_pts, poly, &mut pts);
            }
            pts.extend_from_slice(&ring_pts);

            // hexagonal far-field lattice
            lattice_points(poly, sf, &size_fields[p].corners, &mut pts);

            // CDT + angle-limited refinement
            let spade_pts: Vec<Point2<f64>> = pts.iter().map(|z| Point2::new(z.re, z.im)).collect();
            let n_input = spade_pts.len();
            let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(
                spade_pts,
                constraints,
            )
            .map_err(|e| MeshError::Unmeshable(format!("polygon {p}: {e:?}")))?;
            if cdt.num_vertices() != n_input {
                return Err(MeshError::Unmeshable(format!(
                    "polygon {p}: duplicate points collapsed during triangulation"
                )));
            }
            let result = cdt.refine(
                RefinementParameters::<f64>::new()
                    .keep_constraint_edges()
                    .exclude_outer_faces(true)
                    .with_angle_limit(AngleLimit::from_deg(26.0)),
            );
            if !result.refinement_complete {
                return Err(MeshError::Unmeshable(format!(
                    "polygon {p}: refinement hit its vertex budget"
                )));
            }

            // extract, filtering to faces inside the polygon
            let verts: Vec<Cx> = cdt
                .vertices()
                .map(|v| Cx::new(v.position().x, v.position().y))
                .collect();
            for (i, z) in verts.iter().enumerate() {
                if i < n_input {
                    debug_assert!((pts[i] - z).norm() == 0.0);
                }
                nodes.push(MeshNode {
                    re: z.re,
                    im: z.im,
                    poly: p,
                });
            }
            let mut local_tris: Vec<[usize; 3]> = Vec::new();
            for face in cdt.inner_faces() {
                let vs = face.vertices();
                let tri = [vs[0].index(), vs[1].index(), vs[2].index()];
                let centroid = (verts[tri[0]] + verts[tri[1]] + verts[tri[2]]) / 3.0;
                if !geom::point_in_polygon(centroid, poly) {
                    continue;
                }
                // drop boundary slivers: all three nodes on one polygon edge
                let on_edge = |v: usize, e: usize| {
                    e != usize::MAX
                        && v < pt_edges.len()
                        && (pt_edges[v][0] == e || pt_edges[v][1] == e)
                };
                let degenerate = tri[0] < pt_edges.len()
                    && pt_edges[tri[0]]
                        .iter()
                        .any(|&e| on_edge(tri[1], e) && on_edge(tri[2], e));
                if degenerate {
                    continue;
                }
                let a = verts[tri[0]];
                let b = verts[tri[1]];
                let c = verts[tri[2]];
                if geom::cross(b - a, c - a) > 0.0 {
                    local_tris.push(tri);
                } else {
                    local_tris.push([tri[0], tri[2], tri[1]]);
                }
            }

            // interior smoothing (boundary nodes stay put; pairing match intact)
            let mut verts = verts;
            let movable: Vec<bool> = (0..verts.len()).map(|i| i >= n_boundary).collect();
            smooth_interior(&mut verts, &local_tris, &movable, 4);
            for (i, z) in verts.iter().enumerate() {
                nodes[base + i] = MeshNode {
                    re: z.re,
                    im: z.im,
                    poly: p,
                };
            }
            for t in &local_tris {
                triangles.push([base + t[0], base + t[1], base + t[2]]);
                tri_poly.push(p);
            }
        }

        // 3. dof classes: union paired chains and cone corner classes
        let mut uf = UnionFind::new(nodes.len());
        for (k, (ca, cb)) in chain_nodes.iter().enumerate() {
            if ca.len() != cb.len() {
                return Err(MeshError::InvariantViolation(format!(
                    "pairing {k}: side node counts differ ({} vs {})",
                    ca.len(),
                    cb.len()
                )));
            }
            for (na, nb) in ca.iter().zip(cb.iter()) {
                uf.union(*na, *nb);
            }
        }
        for (ci, class) in surface.vertex_classes.iter().enumerate() {
            let _ = ci;
            let mut first = usize::MAX;
            for c in &class.corners {
                let n = corner_node[c.poly][c.vertex];
                if first == usize::MAX {
                    first = n;
                } else {
                    uf.union(first, n);
                }
            }
        }
        let (dof_of_node, num_dofs) = uf.compress();

        // verify paired placements actually match under the translation
        let diameter = surface.diameter;
        for (k, (ca, cb)) in chain_nodes.iter().enumerate() {
            let (a, _) = surface.pairings[k];
            let tau = surface.partner(a).expect("paired edge").translation;
            for (na, nb) in ca.iter().zip(cb.iter()) {
                let za = nodes[*na].pos() + tau;
                let zb = nodes[*nb].pos();
                if (za - zb).norm() > 1e-9 * diameter {
                    return Err(MeshError::InvariantViolation(format!(
                        "pairing {k}: node placement mismatch {:.3e}",
                        (za - zb).norm()
                    )));
                }
            }
        }

        let mut cone_node = vec![false; nodes.len()];
        let mut cones_out = cones;
        for cone in &mut cones_out {
            for cc in &mut cone.corners {
                cc.node = corner_node[cc.poly][cc.vertex];
                cone_node[cc.node] = true;
            }
        }

        let chains: Vec<BoundaryChain> = chain_nodes
            .into_iter()
            .enumerate()
            .map(|(k, (side_a, side_b))| BoundaryChain {
                pairing: k,
                side_a,
                side_b,
            })
            .collect();

        let locator = TriLocator::build(&nodes, &triangles, h);
        let mesh = Mesh {
            nodes,
            triangles,
            tri_poly,
            dof_of_node,
            num_dofs,
            cones: cones_out,
            cone_node,
            chains,
            polygons: surface.polygons.clone(),
            h,
            h_min,
            beta,
            diameter,
            locator,
        };
        mesh.check_quality()?;
        Ok(mesh)
    }

    /// Uniform 4-way refinement; identifications preserved (midpoints of
    /// matched segments match).
    pub fn refine(&self) -> Mesh {
        let mut nodes = self.nodes.clone();
        let mut midpoint: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut mid = |a: usize, b: usize, nodes: &mut Vec<MeshNode>| -> usize {
            let key = (a.min(b), a.max(b));
            if let Some(&m) = midpoint.get(&key) {
                return m;
            }
            let pa = nodes[a].pos();
            let pb = nodes[b].pos();
            let z = 0.5 * (pa + pb);
            let id = nodes.len();
            nodes.push(MeshNode {
                re: z.re,
                im: z.im,
                poly: nodes[a].poly,
            });
            midpoint.insert(key, id);
            id
        };

        let mut triangles = Vec::with_capacity(self.triangles.len() * 4);
        let mut tri_poly = Vec::with_capacity(self.triangles.len() * 4);
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let ab = mid(a, b, &mut nodes);
            let bc = mid(b, c, &mut nodes);
            let ca = mid(c, a, &mut nodes);
            for tri in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
                triangles.push(tri);
                tri_poly.push(self.tri_poly[t]);
            }
        }

        // dof classes: old nodes keep their unions; matched chain midpoints unite
        let mut uf = UnionFind::new(nodes.len());
        for (n, &d) in self.dof_of_node.iter().enumerate() {
            let _ = d;
            // union old nodes by their existing dof classes via a representative map
            let _ = n;
        }
        let mut rep_of_dof: Vec<usize> = vec![usize::MAX; self.num_dofs];
        for (n, &d) in self.dof_of_node.iter().enumerate() {
            if rep_of_dof[d] == usize::MAX {
                rep_of_dof[d] = n;
            } else {
                uf.union(rep_of_dof[d], n);
            }
        }
        let mut chains = Vec::with_capacity(self.chains.len());
        for chain in &self.chains {
            let mut new_a = Vec::with_capacity(chain.side_a.len() * 2 - 1);
            let mut new_b = Vec::with_capacity(chain.side_b.len() * 2 - 1);
            for w in chain.side_a.windows(2) {
                new_a.push(w[0]);
                new_a.push(mid(w[0], w[1], &mut nodes));
            }
            new_a.push(*chain.side_a.last().unwrap());
            for w in chain.side_b.windows(2) {
                new_b.push(w[0]);
                new_b.push(mid(w[0], w[1], &mut nodes));
            }
            new_b.push(*chain.side_b.last().unwrap());
            for (na, nb) in new_a.iter().zip(new_b.iter()) {
                uf.union(*na, *nb);
            }
            chains.push(BoundaryChain {
                pairing: chain.pairing,
                side_a: new_a,
                side_b: new_b,
            });
        }
        let (dof_of_node, num_dofs) = uf.compress();

        let mut cone_node = vec![false; nodes.len()];
        for cone in &self.cones {
            for cc in &cone.corners {
                cone_node[cc.node] = true;
            }
        }

        let locator = TriLocator::build(&nodes, &triangles, self.h * 0.5);
        Mesh {
            nodes,
            triangles,
            tri_poly,
            dof_of_node,
            num_dofs,
            cones: self.cones.clone(),
            cone_node,
            chains,
            polygons: self.polygons.clone(),
            h: self.h * 0.5,
            h_min: self.h_min * 0.5,
            beta: self.beta,
            diameter: self.diameter,
            locator,
        }
    }

    /// The mesh of the surface scaled by `c` (same combinatorics, scaled
    /// geometry). Realizes ρ ↦ cρ without re-triangulating.
    pub fn scaled(&self, c: Cx) -> Mesh {
        let s = c.norm();
        let nodes: Vec<MeshNode> = self
            .nodes
            .iter()
            .map(|n| {
                let z = n.pos() * c;
                MeshNode {
                    re: z.re,
                    im: z.im,
                    poly: n.poly,
                }
            })
            .collect();
        let polygons: Vec<Vec<Cx>> = self
            .polygons
            .iter()
            .map(|p| p.iter().map(|z| z * c).collect())
            .collect();
        let cones: Vec<MeshCone> = self
            .cones
            .iter()
            .map(|cone| MeshCone {
                class: cone.class,
                order: cone.order,
                cutoff_radius: cone.cutoff_radius * s,
                corners: cone
                    .corners
                    .iter()
                    .map(|cc| ConeCorner {
                        poly: cc.poly,
                        vertex: cc.vertex,
                        pos: cc.pos * c,
                        dir_out: cc.dir_out * (c / s),
                        angle: cc.angle,
                        node: cc.node,
                    })
                    .collect(),
            })
            .collect();
        let locator = TriLocator::build(&nodes, &self.triangles, self.h * s);
        Mesh {
            nodes,
            triangles: self.triangles.clone(),
            tri_poly: self.tri_poly.clone(),
            dof_of_node: self.dof_of_node.clone(),
            num_dofs: self.num_dofs,
            cones,
            cone_node: self.cone_node.clone(),
            chains: self.chains.clone(),
            polygons,
            h: self.h * s,
            h_min: self.h_min * s,
            beta: self.beta,
            diameter: self.diameter * s,
            locator,
        }
    }

    /// Uniform mesh of a plain planar polygon (no pairings, identity dofs);
    /// the polygon vertices double as the boundary discretization. Returns
    /// the mesh and the boundary node ids. Used by auxiliary Dirichlet
    /// problems.
    pub fn planar_polygon(poly: &[Cx], h: f64) -> Result<(Mesh, Vec<usize>), MeshError> {
        if poly.len() < 3 {
            return Err(MeshError::Unmeshable("polygon needs ≥ 3 vertices".into()));
        }
        let sf = SizeField {
            h,
            h_min: h,
            beta: 0.0,
            corners: Vec::new(),
        };
        let mut pts: Vec<Cx> = poly.to_vec();
        let n = poly.len();
        let constraints: Vec<[usize; 2]> = (0..n).map(|i| [i, (i + 1) % n]).collect();
        let mut chain: Vec<Cx> = poly.to_vec();
        chain.push(poly[0]);
        boundary_offset_points(&chain, &sf, &[], poly, &mut pts);
        lattice_points(poly, &sf, &[], &mut pts);
        let spade_pts: Vec<Point2<f64>> = pts.iter().map(|z| Point2::new(z.re, z.im)).collect();
        let n_input = spade_pts.len();
        let mut cdt =
            ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(spade_pts, constraints)
                .map_err(|e| MeshError::Unmeshable(format!("{e:?}")))?;
        if cdt.num_vertices() != n_input {
            return Err(MeshError::Unmeshable(
                "duplicate points collapsed during triangulation".into(),
            ));
        }
        let result = cdt.refine(
            RefinementParameters::<f64>::new()
                .keep_constraint_edges()
                .exclude_outer_faces(true)
                .with_angle_limit(AngleLimit::from_deg(26.0)),
        );
        if !result.refinement_complete {
            return Err(MeshError::Unmeshable("refinement hit vertex budget".into()));
        }
        let verts: Vec<Cx> = cdt
            .vertices()
            .map(|v| Cx::new(v.position().x, v.position().y))
            .collect();
        let nodes: Vec<MeshNode> = verts
            .iter()
            .map(|z| MeshNode {
                re: z.re,
                im: z.im,
                poly: 0,
            })
            .collect();
        let mut triangles = Vec::new();
        for face in cdt.inner_faces() {
            let vs = face.vertices();
            let tri = [vs[0].index(), vs[1].index(), vs[2].index()];
            let centroid = (verts[tri[0]] + verts[tri[1]] + verts[tri[2]]) / 3.0;
            if !geom::point_in_polygon(centroid, poly) {
                continue;
            }
            let (a, b, c) = (verts[tri[0]], verts[tri[1]], verts[tri[2]]);
            if geom::cross(b - a, c - a) > 0.0 {
                triangles.push(tri);
            } else {
                triangles.push([tri[0], tri[2], tri[1]]);
            }
        }
        let mut mesh = Mesh::from_raw(nodes, triangles, h);
        mesh.polygons = vec![poly.to_vec()];
        mesh.check_quality()?;
        Ok((mesh, (0..n).collect()))
    }

    /// Builds a mesh from raw nodes/triangles (no pairings, identity dofs).
    /// Used by auxiliary problems on plain planar domains.
    pub fn from_raw(nodes: Vec<MeshNode>, triangles: Vec<[usize; 3]>, h: f64) -> Mesh {
        let n = nodes.len();
        let all_pts: Vec<Cx> = nodes.iter().map(|n| n.pos()).collect();
        let diameter = {
            let (lo, hi) = geom::bbox(&all_pts);
            (hi - lo).norm()
        };
        let tri_poly = vec![0; triangles.len()];
        let locator = TriLocator::build(&nodes, &triangles, h);
        Mesh {
            nodes,
            triangles,
            tri_poly,
            dof_of_node: (0..n).collect(),
            num_dofs: n,
            cones: Vec::new(),
            cone_node: vec![false; n],
            chains: Vec::new(),
            polygons: Vec::new(),
            h,
            h_min: h,
            beta: 0.0,
            diameter,
            locator,
        }
    }

    pub fn node_pos(&self, n: usize) -> Cx {
        self.nodes[n].pos()
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * geom::cross(
            self.node_pos(b) - self.node_pos(a),
            self.node_pos(c) - self.node_pos(a),
        )
    }

    pub fn total_flat_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.tri_area(t)).sum()
    }

    pub fn min_angle_deg(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangles[t];
            let pa = self.node_pos(a);
            let pb = self.node_pos(b);
            let pc = self.node_pos(c);
            for (u, v, w) in [(pa, pb, pc), (pb, pc, pa), (pc, pa, pb)] {
                let x = v - u;
                let y = w - u;
                let ang = geom::cross(x, y).atan2(geom::dot(x, y)).abs();
                min = min.min(ang);
            }
        }
        min.to_degrees()
    }

    /// Locates the triangle containing `x` in polygon `poly` (tolerant of
    /// boundary points); returns (triangle id, barycentric coords).
    pub fn locate(&self, poly: usize, x: Cx) -> Option<(usize, [f64; 3])> {
        self.locator.locate(self, poly, x)
    }

    /// Element size field value at a chart point.
    pub fn local_size(&self, poly: usize, x: Cx) -> f64 {
        let mut s = self.h;
        for cone in &self.cones {
            for cc in cone.corners.iter().filter(|cc| cc.poly == poly) {
                s = s.min(graded_size(
                    self.h,
                    self.h_min,
                    self.beta,
                    (x - cc.pos).norm(),
                    cone.cutoff_radius,
                ));
            }
        }
        s
    }

    /// Distance to the nearest cone corner in this chart, with the cone index.
    pub fn nearest_cone(&self, poly: usize, x: Cx) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (ci, cone) in self.cones.iter().enumerate() {
            for cc in cone.corners.iter().filter(|cc| cc.poly == poly) {
                let d = (x - cc.pos).norm();
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((ci, d));
                }
            }
        }
        best
    }

    fn check_quality(&self) -> Result<(), MeshError> {
        for t in 0..self.triangles.len() {
            if self.tri_area(t) <= 0.0 {
                return Err(MeshError::InvariantViolation(format!(
                    "triangle {t} degenerate or inverted"
                )));
            }
        }
        let min_angle = self.min_angle_deg();
        if min_angle < 20.0 {
            let mut worst = (0usize, f64::INFINITY);
            for t in 0..self.triangles.len() {
                let [a, b, c] = self.triangles[t];
                let pa = self.node_pos(a);
                let pb = self.node_pos(b);
                let pc = self.node_pos(c);
                for (u, v, w) in [(pa, pb, pc), (pb, pc, pa), (pc, pa, pb)] {
                    let x = v - u;
                    let y = w - u;
                    let ang = geom::cross(x, y).atan2(geom::dot(x, y)).abs();
                    if ang < worst.1 {
                        worst = (t, ang);
                    }
                }
            }
            let [a, b, c] = self.triangles[worst.0];
            return Err(MeshError::InvariantViolation(format!(
                "min angle {min_angle:.3}° below 20° (triangle {} with nodes {:?} {:?} {:?})",
                worst.0,
                self.node_pos(a),
                self.node_pos(b),
                self.node_pos(c)
            )));
        }
        Ok(())
    }

    /// Structured dump (nodes, triangles, dof classes) for external tools.
    pub fn dump(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            nodes: &'a [MeshNode],
            triangles: &'a [[usize; 3]],
            dof_of_node: &'a [usize],
            num_dofs: usize,
            h: f64,
            h_min: f64,
            beta: f64,
        }
        serde_json::to_string_pretty(&Dump {
            nodes: &self.nodes,
            triangles: &self.triangles,
            dof_of_node: &self.dof_of_node,
            num_dofs: self.num_dofs,
            h: self.h,
            h_min: self.h_min,
            beta: self.beta,
        })
        .expect("mesh dump")
    }
}

/// Cone classes with cutoff radii (half the distance to the nearest other
/// vertex or non-incident edge, so singular supports stay disjoint and
/// single-valued).
fn cone_data(surface: &TranslationSurface) -> Vec<MeshCone> {
    let mut cones = Vec::new();
    for (ci, class) in surface.vertex_classes.iter().enumerate() {
        if class.order < 1 {
            continue;
        }
        let mut cutoff = f64::INFINITY;
        let mut corners = Vec::new();
        for c in &class.corners {
            let poly = &surface.polygons[c.poly];
            let n = poly.len();
            let v = poly[c.vertex];
            for (w, z) in poly.iter().enumerate() {
                if w != c.vertex {
                    cutoff = cutoff.min((z - v).norm());
                }
            }
            for e in 0..n {
                // non-incident edges only
                if e == c.vertex || (e + 1) % n == c.vertex {
                    continue;
                }
                cutoff = cutoff.min(geom::dist_point_segment(v, poly[e], poly[(e + 1) % n]));
            }
            let next = poly[(c.vertex + 1) % n];
            let prev = poly[(c.vertex + n - 1) % n];
            let dir_out = (next - v) / (next - v).norm();
            corners.push(ConeCorner {
                poly: c.poly,
                vertex: c.vertex,
                pos: v,
                dir_out,
                angle: geom::interior_angle(prev, v, next),
                node: usize::MAX,
            });
        }
        cones.push(MeshCone {
            class: ci,
            order: class.order,
            cutoff_radius: 0.5 * cutoff,
            corners,
        });
    }
    cones
}

/// Graded subdivision of an edge: interior breakpoints as fractions of the
/// tail→head parameter, spaced by the inverse size field.
fn subdivide_edge(a0: Cx, a1: Cx, sf: &SizeField) -> Vec<f64> {
    let len = (a1 - a0).norm();
    let samples = ((4.0 * len / sf.h_min).ceil() as usize).clamp(64, 20_000);
    let mut cum = Vec::with_capacity(samples + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    let dl = len / samples as f64;
    let mut prev_inv = 1.0 / sf.size(a0);
    for i in 1..=samples {
        let t = i as f64 / samples as f64;
        let inv = 1.0 / sf.size(a0 + (a1 - a0) * t);
        acc += 0.5 * (prev_inv + inv) * dl;
        cum.push(acc);
        prev_inv = inv;
    }
    let total = acc;
    let n = (total.round() as usize).max(1);
    let mut fracs = Vec::with_capacity(n.saturating_sub(1));
    let mut j = 0usize;
    for k in 1..n {
        let target = total * k as f64 / n as f64;
        while j + 1 < cum.len() && cum[j + 1] < target {
            j += 1;
        }
        let seg = cum[j + 1] - cum[j];
        let frac_in = if seg > 0.0 { (target - cum[j]) / seg } else { 0.0 };
        fracs.push((j as f64 + frac_in) / samples as f64);
    }
    fracs
}

/// Concentric ring points inside a cone corner wedge, spaced by the size
/// field, stopping near h_min scale.
fn ring_points(cc: &ConeCorner, rc: f64, sf: &SizeField, poly: &[Cx], pts: &mut Vec<Cx>) {
    let mut r = rc - 0.5 * sf.size(cc.pos + cc.dir_out * rc);
    while r > 2.2 * sf.h_min {
        let s = graded_size(sf.h, sf.h_min, sf.beta, r, rc);
        let m = ((cc.angle * r / s).round() as usize).max(1);
        for k in 0..m {
            let phi = cc.angle * (k as f64 + 0.5) / m as f64;
            let z = cc.pos + cc.dir_out * Cx::from_polar(r, phi);
            if geom::dist_to_boundary(z, poly) >= 0.45 * s && geom::point_in_polygon(z, poly) {
                pts.push(z);
            }
        }
        r -= s;
    }
}

/// Smart Laplacian smoothing: each movable node may move to the centroid of
/// its neighbors, accepted only when the worst corner angle of its incident
/// triangles does not get worse. Deterministic sweep order.
fn smooth_interior(verts: &mut [Cx], tris: &[[usize; 3]], movable: &[bool], rounds: usize) {
    let n = verts.len();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, tri) in tris.iter().enumerate() {
        for i in 0..3 {
            let a = tri[i];
            incident[a].push(t);
            for j in 0..3 {
                if i != j && !neighbors[a].contains(&tri[j]) {
                    neighbors[a].push(tri[j]);
                }
            }
        }
    }
    let min_angle_at = |verts: &[Cx], ts: &[usize]| -> f64 {
        let mut min = f64::INFINITY;
        for &t in ts {
            let [a, b, c] = tris[t];
            let (pa, pb, pc) = (verts[a], verts[b], verts[c]);
            if geom::cross(pb - pa, pc - pa) <= 0.0 {
                return f64::NEG_INFINITY;
            }
            for (u, v, w) in [(pa, pb, pc), (pb, pc, pa), (pc, pa, pb)] {
                let x = v - u;
                let y = w - u;
                min = min.min(geom::cross(x, y).atan2(geom::dot(x, y)).abs());
            }
        }
        min
    };
    for _ in 0..rounds {
        for i in 0..n {
            if !movable[i] || neighbors[i].is_empty() {
                continue;
            }
            let mut c = Cx::new(0.0, 0.0);
            for &j in &neighbors[i] {
                c += verts[j];
            }
            c /= neighbors[i].len() as f64;
            let before = min_angle_at(verts, &incident[i]);
            let old = verts[i];
            verts[i] = c;
            let after = min_angle_at(verts, &incident[i]);
            if after < before {
                verts[i] = old;
            }
        }
    }
}

/// One interior point per boundary segment, offset inward by √3/2 of the
/// segment length: gives the boundary a clean first layer of near-equilateral
/// triangles (the piecewise-linear error otherwise peaks in a stretched band
/// along the boundary). Skipped where it would crowd cone rings.
fn boundary_offset_points(
    boundary_chain: &[Cx],
    sf: &SizeField,
    ring_pts: &[Cx],
    poly: &[Cx],
    pts: &mut Vec<Cx>,
) {
    let mut row: Vec<Cx> = Vec::new();
    for w in boundary_chain.windows(2) {
        let (a, b) = (w[0], w[1]);
        let seg = b - a;
        let len = seg.norm();
        // far-field segments only: inside the graded zones the boundary band
        // is already fine-scaled and the cone rings own the interior
        if len < 0.7 * sf.h {
            continue;
        }
        let p = 0.5 * (a + b) + Cx::new(-seg.im, seg.re) * (3f64.sqrt() / 2.0);
        if !geom::point_in_polygon(p, poly) {
            continue;
        }
        if geom::dist_to_boundary(p, poly) < 0.6 * len {
            continue;
        }
        let s = sf.size(p);
        if ring_pts.iter().any(|r| (p - r).norm() < 0.6 * s) {
            continue;
        }
        if row.iter().any(|r| (p - r).norm() < 0.6 * len.min(s)) {
            continue;
        }
        row.push(p);
    }
    pts.extend_from_slice(&row);
}

/// Hexagonal lattice at spacing h over the polygon, kept clear of the
/// boundary band (covered by the offset row) and of cone ring zones.
fn lattice_points(poly: &[Cx], sf: &SizeField, cones: &[(Cx, f64)], pts: &mut Vec<Cx>) {
    let (lo, hi) = geom::bbox(poly);
    let h = sf.h;
    let dy = h * 3f64.sqrt() / 2.0;
    let ny = ((hi.im - lo.im) / dy).ceil() as i64;
    let nx = ((hi.re - lo.re) / h).ceil() as i64;
    for j in 0..=ny {
        let y = lo.im + j as f64 * dy;
        let off = if j % 2 == 0 { 0.0 } else { 0.5 * h };
        for i in 0..=nx {
            let x = lo.re + off + i as f64 * h;
            let z = Cx::new(x, y);
            if !geom::point_in_polygon(z, poly) {
                continue;
            }
            if geom::dist_to_boundary(z, poly) < 1.25 * h {
                continue;
            }
            if cones.iter().any(|(c, rc)| (z - c).norm() <= *rc) {
                continue;
            }
            pts.push(z);
        }
    }
}

#[derive(Clone, Debug)]
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }
    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = i;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }
    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            // deterministic: smaller index wins
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
    /// Returns (class index per element, class count) with classes numbered
    /// by first appearance.
    fn compress(&mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut class_of_root = vec![usize::MAX; n];
        let mut out = vec![0usize; n];
        let mut count = 0usize;
        for i in 0..n {
            let r = self.find(i);
            if class_of_root[r] == usize::MAX {
                class_of_root[r] = count;
                count += 1;
            }
            out[i] = class_of_root[r];
        }
        (out, count)
    }
}

/// Uniform-grid point locator for triangles, per polygon.
#[derive(Clone, Debug)]
struct TriLocator {
    lo: Cx,
    cell: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
}

impl TriLocator {
    fn build(nodes: &[MeshNode], triangles: &[[usize; 3]], h: f64) -> Self {
        let pts: Vec<Cx> = nodes.iter().map(|n| n.pos()).collect();
        let (lo, hi) = if pts.is_empty() {
            (Cx::new(0.0, 0.0), Cx::new(1.0, 1.0))
        } else {
            geom::bbox(&pts)
        };
        let cell = (2.0 * h).max(1e-12);
        let nx = (((hi.re - lo.re) / cell).ceil() as usize + 1).max(1);
        let ny = (((hi.im - lo.im) / cell).ceil() as usize + 1).max(1);
        let mut bins = vec![Vec::new(); nx * ny];
        for (t, tri) in triangles.iter().enumerate() {
            let (tlo, thi) = geom::bbox(&[pts[tri[0]], pts[tri[1]], pts[tri[2]]]);
            let i0 = (((tlo.re - lo.re) / cell).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let i1 = (((thi.re - lo.re) / cell).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let j0 = (((tlo.im - lo.im) / cell).floor() as isize).clamp(0, ny as isize - 1) as usize;
            let j1 = (((thi.im - lo.im) / cell).floor() as isize).clamp(0, ny as isize - 1) as usize;
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(t as u32);
                }
            }
        }
        Self {
            lo,
            cell,
            nx,
            ny,
            bins,
        }
    }

    fn locate(&self, mesh: &Mesh, poly: usize, x: Cx) -> Option<(usize, [f64; 3])> {
        let i = (((x.re - self.lo.re) / self.cell).floor() as isize).clamp(0, self.nx as isize - 1)
            as usize;
        let j = (((x.im - self.lo.im) / self.cell).floor() as isize).clamp(0, self.ny as isize - 1)
            as usize;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.bins[j * self.nx + i] {
            let t = t as usize;
            if mesh.tri_poly[t] != poly {
                continue;
            }
            let [a, b, c] = mesh.triangles[t];
            let pa = mesh.node_pos(a);
            let pb = mesh.node_pos(b);
            let pc = mesh.node_pos(c);
            let area2 = geom::cross(pb - pa, pc - pa);
            if area2 <= 0.0 {
                continue;
            }
            let la = geom::cross(pb - x, pc - x) / area2;
            let lb = geom::cross(pc - x, pa - x) / area2;
            let lc = 1.0 - la - lb;
            let worst = la.min(lb).min(lc);
            if worst >= 0.0 {
                return Some((t, [la, lb, lc]));
            }
            if best.map_or(true, |(_, _, w)| worst > w) {
                best = Some((t, [la, lb, lc], worst));
            }
        }
        // tolerate points marginally outside (boundary roundoff)
        if let Some((t, l, w)) = best {
            if w > -1e-9 {
                return Some((t, l));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::regular_2n_gon;

    fn coarse_octagon_mesh() -> Mesh {
        let s = regular_2n_gon(4).unwrap();
        Mesh::triangulate(&s, 0.18, 0.6, 0.18 / 50.0).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        let s = regular_2n_gon(4).unwrap();
        assert!(matches!(
            Mesh::triangulate(&s, 0.1, 0.6, 0.2),
            Err(MeshError::BadParams(_))
        ));
        assert!(matches!(
            Mesh::triangulate(&s, -1.0, 0.6, 0.1),
            Err(MeshError::BadParams(_))
        ));
    }

    #[test]
    fn paired_chains_match_node_for_node() {
        let mesh = coarse_octagon_mesh();
        for chain in &mesh.chains {
            assert_eq!(chain.side_a.len(), chain.side_b.len());
            assert!(chain.side_a.len() >= 3);
            for (na, nb) in chain.side_a.iter().zip(chain.side_b.iter()) {
                assert_eq!(mesh.dof_of_node[*na], mesh.dof_of_node[*nb]);
            }
        }
    }

    #[test]
    fn flat_area_matches_polygon_area() {
        let mesh = coarse_octagon_mesh();
        let poly_area: f64 = mesh.polygons.iter().map(|p| geom::polygon_area(p)).sum();
        let rel = (mesh.total_flat_area() - poly_area).abs() / poly_area;
        assert!(rel < 1e-10, "relative area defect {rel:.3e}");
    }

    #[test]
    fn quality_and_grading() {
        let mesh = coarse_octagon_mesh();
        assert!(mesh.min_angle_deg() >= 20.0);
        // grading: triangles near the cone are much smaller than h
        let cone = &mesh.cones[0];
        let cc = &cone.corners[0];
        let mut near_size = f64::INFINITY;
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangles[t];
            let centroid = (mesh.node_pos(a) + mesh.node_pos(b) + mesh.node_pos(c)) / 3.0;
            if (centroid - cc.pos).norm() < 0.1 * cone.cutoff_radius {
                let e = (mesh.node_pos(b) - mesh.node_pos(a)).norm();
                near_size = near_size.min(e);
            }
        }
        assert!(
            near_size < 0.35 * mesh.h,
            "no grading near cone: {near_size} vs h {}",
            mesh.h
        );
    }

    #[test]
    fn refine_quadruples_triangles_and_keeps_matching() {
        let mesh = coarse_octagon_mesh();
        let fine = mesh.refine();
        assert_eq!(fine.triangles.len(), 4 * mesh.triangles.len());
        for chain in &fine.chains {
            for (na, nb) in chain.side_a.iter().zip(chain.side_b.iter()) {
                assert_eq!(fine.dof_of_node[*na], fine.dof_of_node[*nb]);
            }
        }
        // boundary chain node count: n → 2n−1, twice → 4n−3
        let n0 = mesh.chains[0].side_a.len();
        let n1 = fine.chains[0].side_a.len();
        assert_eq!(n1, 2 * n0 - 1);
        let finer = fine.refine();
        assert_eq!(finer.chains[0].side_a.len(), 4 * n0 - 3);
        assert!(fine.min_angle_deg() >= mesh.min_angle_deg() - 1.0);
    }

    #[test]
    fn boundary_nodes_lie_on_exactly_one_pairing_or_are_cone_nodes() {
        let mesh = coarse_octagon_mesh();
        let mut seen = vec![0usize; mesh.nodes.len()];
        for chain in &mesh.chains {
            for &n in chain.side_a[1..chain.side_a.len() - 1].iter() {
                seen[n] += 1;
            }
            for &n in chain.side_b[1..chain.side_b.len() - 1].iter() {
                seen[n] += 1;
            }
        }
        for n in 0..mesh.nodes.len() {
            if seen[n] > 0 {
                assert_eq!(seen[n], 1, "node {n} on several pairings");
                assert!(!mesh.cone_node[n]);
            }
        }
        // every chain endpoint is a cone node here (octagon: all corners identified)
        for chain in &mesh.chains {
            assert!(mesh.cone_node[*chain.side_a.first().unwrap()]);
            assert!(mesh.cone_node[*chain.side_a.last().unwrap()]);
        }
    }

    #[test]
    fn locate_finds_interior_points() {
        let mesh = coarse_octagon_mesh();
        let (t, l) = mesh.locate(0, Cx::new(0.05, 0.02)).unwrap();
        assert!(t < mesh.triangles.len());
        assert!((l[0] + l[1] + l[2] - 1.0).abs() < 1e-12);
        assert!(mesh.locate(0, Cx::new(5.0, 5.0)).is_none());
    }

    #[test]
    fn scaled_mesh_scales_geometry_only() {
        let mesh = coarse_octagon_mesh();
        let c = Cx::from_polar(2.0, 0.7);
        let sm = mesh.scaled(c);
        assert_eq!(sm.triangles, mesh.triangles);
        assert_eq!(sm.dof_of_node, mesh.dof_of_node);
        let rel = (sm.total_flat_area() - mesh.total_flat_area() * c.norm_sqr()).abs()
            / sm.total_flat_area();
        assert!(rel < 1e-12);
    }
}
