//! Translation surfaces: polygons in the plane with translation edge
//! pairings.
//!
//! A surface document encodes (Σ, ρ): the flat charts carry ρ = dz, zeros of
//! ρ of order d appear as cone points of total angle 2π(d+1), and the stratum
//! (d₁,…,d_m) satisfies Σdᵢ = 2g−2. Everything downstream (meshing, the
//! curvature solve, flow tracing) reads geometry exclusively through this
//! module.

use crate::geom::{self, Cx};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A directed polygon edge: edge `edge` runs from vertex `edge` to vertex
/// `edge+1` (mod n) of polygon `poly`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeRef {
    pub poly: usize,
    pub edge: usize,
}

/// A polygon corner (vertex `vertex` of polygon `poly`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CornerRef {
    pub poly: usize,
    pub vertex: usize,
}

/// Identification class of polygon corners forming one surface point.
#[derive(Clone, Debug)]
pub struct VertexClass {
    pub corners: Vec<CornerRef>,
    /// Total flat angle around the point; 2π(d+1) for integer d ≥ 0.
    pub total_angle: f64,
    /// Zero order d of ρ at this point (cone point iff d ≥ 1).
    pub order: usize,
}

/// Chart transition across one pairing: `z ↦ z + translation`.
#[derive(Clone, Copy, Debug)]
pub struct ChartTransition {
    pub from_edge: EdgeRef,
    pub to_edge: EdgeRef,
    pub translation: Cx,
}

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("pairing {pairing} refers to nonexistent edge ({poly}, {edge})")]
    BadEdgeRef { pairing: usize, poly: usize, edge: usize },
    #[error("invalid surface: {0}")]
    Invalid(String),
    #[error("scale factor must be nonzero")]
    ZeroScale,
    #[error("point is not on a paired edge interior: {0}")]
    NotOnEdge(String),
    #[error("point is at a cone vertex (singular chart crossing)")]
    ConePoint,
    #[error("degenerate builtin parameters: {0}")]
    BadBuiltinParams(String),
}

/// Raw document shape; strict (unknown keys rejected).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurfaceDoc {
    #[serde(default)]
    name: Option<String>,
    polygons: Vec<Vec<[f64; 2]>>,
    pairings: Vec<[[usize; 2]; 2]>,
}

/// A translation surface together with its derived combinatorics.
#[derive(Clone, Debug)]
pub struct TranslationSurface {
    pub name: Option<String>,
    /// Closed vertex loops, positively oriented.
    pub polygons: Vec<Vec<Cx>>,
    /// Unordered pairs of directed edges identified by translation.
    pub pairings: Vec<(EdgeRef, EdgeRef)>,
    /// Vertex identification classes (cone points have order ≥ 1).
    pub vertex_classes: Vec<VertexClass>,
    /// For each polygon, the class index of each corner.
    pub class_of_corner: Vec<Vec<usize>>,
    /// For each polygon, pairing index of each edge.
    pub pairing_of_edge: Vec<Vec<usize>>,
    pub genus: usize,
    pub diameter: f64,
}

impl TranslationSurface {
    /// Builds and validates; rejects surfaces with any invariant violation.
    pub fn new(
        name: Option<String>,
        polygons: Vec<Vec<Cx>>,
        pairings: Vec<(EdgeRef, EdgeRef)>,
    ) -> Result<Self, SurfaceError> {
        let s = Self::build_unchecked(name, polygons, pairings)?;
        let report = s.validate();
        if !report.violations.is_empty() {
            return Err(SurfaceError::Invalid(report.violations.join("; ")));
        }
        Ok(s)
    }

    /// Builds derived data without enforcing the validation verdict
    /// (`validate` still reports violations on the result). Structural
    /// errors (dangling edge refs, empty polygons) are still fatal.
    pub fn build_unchecked(
        name: Option<String>,
        polygons: Vec<Vec<Cx>>,
        pairings: Vec<(EdgeRef, EdgeRef)>,
    ) -> Result<Self, SurfaceError> {
        if polygons.is_empty() || polygons.iter().any(|p| p.len() < 3) {
            return Err(SurfaceError::Invalid(
                "each polygon needs at least 3 vertices".into(),
            ));
        }
        for (k, (a, b)) in pairings.iter().enumerate() {
            for e in [a, b] {
                if e.poly >= polygons.len() || e.edge >= polygons[e.poly].len() {
                    return Err(SurfaceError::BadEdgeRef {
                        pairing: k,
                        poly: e.poly,
                        edge: e.edge,
                    });
                }
            }
        }
        let mut pairing_of_edge: Vec<Vec<usize>> =
            polygons.iter().map(|p| vec![usize::MAX; p.len()]).collect();
        for (k, (a, b)) in pairings.iter().enumerate() {
            for e in [a, b] {
                if pairing_of_edge[e.poly][e.edge] != usize::MAX {
                    return Err(SurfaceError::Invalid(format!(
                        "edge ({}, {}) appears in more than one pairing",
                        e.poly, e.edge
                    )));
                }
                pairing_of_edge[e.poly][e.edge] = k;
            }
        }

        let (vertex_classes, class_of_corner) =
            vertex_classes(&polygons, &pairings, &pairing_of_edge)?;
        let all_points: Vec<Cx> = polygons.iter().flatten().copied().collect();
        let diameter = geom::diameter(&all_points);
        let genus = genus_from_counts(vertex_classes.len(), pairings.len(), polygons.len());

        Ok(Self {
            name,
            polygons,
            pairings,
            vertex_classes,
            class_of_corner,
            pairing_of_edge,
            genus,
            diameter,
        })
    }

    /// Parses a surface-definition document (JSON with keys `polygons`,
    /// `pairings`, optional `name`; unknown keys rejected).
    pub fn parse(text: &str) -> Result<Self, SurfaceError> {
        let doc: SurfaceDoc =
            serde_json::from_str(text).map_err(|e| SurfaceError::Parse(e.to_string()))?;
        let polygons: Vec<Vec<Cx>> = doc
            .polygons
            .iter()
            .map(|p| p.iter().map(|v| Cx::new(v[0], v[1])).collect())
            .collect();
        let pairings: Vec<(EdgeRef, EdgeRef)> = doc
            .pairings
            .iter()
            .map(|[[p0, e0], [p1, e1]]| {
                (
                    EdgeRef { poly: *p0, edge: *e0 },
                    EdgeRef { poly: *p1, edge: *e1 },
                )
            })
            .collect();
        Self::new(doc.name, polygons, pairings)
    }

    /// Serializes back to the document format.
    pub fn to_document(&self) -> String {
        let doc = SurfaceDoc {
            name: self.name.clone(),
            polygons: self
                .polygons
                .iter()
                .map(|p| p.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
            pairings: self
                .pairings
                .iter()
                .map(|(a, b)| [[a.poly, a.edge], [b.poly, b.edge]])
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("document serialization")
    }

    pub fn edge_endpoints(&self, e: EdgeRef) -> (Cx, Cx) {
        let poly = &self.polygons[e.poly];
        let n = poly.len();
        (poly[e.edge], poly[(e.edge + 1) % n])
    }

    /// Partner edge and the translation mapping this edge's chart onto the
    /// partner's (point on `e` ↦ point + translation on partner).
    pub fn partner(&self, e: EdgeRef) -> Option<ChartTransition> {
        let k = self.pairing_of_edge[e.poly][e.edge];
        if k == usize::MAX {
            return None;
        }
        let (a, b) = self.pairings[k];
        let to = if a == e { b } else { a };
        let (a0, _a1) = self.edge_endpoints(e);
        let (_b0, b1) = self.edge_endpoints(to);
        // tail of `e` is identified with head of `to`
        Some(ChartTransition {
            from_edge: e,
            to_edge: to,
            translation: b1 - a0,
        })
    }

    /// Crosses a paired edge: returns the identified point on the partner
    /// edge and the (unchanged) direction. `point` must lie on the edge
    /// interior within the snap tolerance 1e−9 × diameter.
    pub fn transition(
        &self,
        e: EdgeRef,
        point: Cx,
        direction: Cx,
    ) -> Result<(Cx, Cx, ChartTransition), SurfaceError> {
        let (a0, a1) = self.edge_endpoints(e);
        let snap = 1e-9 * self.diameter;
        if geom::dist_point_segment(point, a0, a1) > snap {
            return Err(SurfaceError::NotOnEdge(format!(
                "({:.6}, {:.6}) is {:.2e} away from edge ({}, {})",
                point.re,
                point.im,
                geom::dist_point_segment(point, a0, a1),
                e.poly,
                e.edge
            )));
        }
        if (point - a0).norm() <= snap || (point - a1).norm() <= snap {
            return Err(SurfaceError::ConePoint);
        }
        let t = self
            .partner(e)
            .ok_or_else(|| SurfaceError::NotOnEdge("edge is unpaired".into()))?;
        Ok((point + t.translation, direction, t))
    }

    /// Develops the straight segment `from → to` (with `from` inside polygon
    /// `poly`) across pairings until `to` lands in a chart; returns that
    /// chart and the images of both endpoints. Differences are preserved
    /// (transitions are translations). Returns None if the segment runs into
    /// a polygon vertex or fails to resolve within a hop budget.
    pub fn carry(&self, poly: usize, from: Cx, to: Cx) -> Option<(usize, Cx, Cx)> {
        let snap = 1e-12 * self.diameter;
        let mut poly = poly;
        let mut from = from;
        let mut to = to;
        for _ in 0..64 {
            let pg = &self.polygons[poly];
            if geom::point_in_polygon(to, pg) || geom::dist_to_boundary(to, pg) <= snap {
                return Some((poly, from, to));
            }
            // first boundary crossing after `from`
            let n = pg.len();
            let mut best: Option<(f64, usize)> = None;
            for e in 0..n {
                let (a, b) = (pg[e], pg[(e + 1) % n]);
                if let Some(t) = geom::segment_intersection_param(from, to, a, b, 1e-9) {
                    if best.map_or(true, |(bt, _)| t < bt) {
                        best = Some((t, e));
                    }
                }
            }
            let (t, e) = best?;
            let hit = from + (to - from) * t;
            let (a, b) = (pg[e], pg[(e + 1) % n]);
            if (hit - a).norm() <= 1e-9 * self.diameter
                || (hit - b).norm() <= 1e-9 * self.diameter
            {
                return None; // runs into a vertex (cone ambiguity)
            }
            let tr = self.partner(EdgeRef { poly, edge: e })?;
            from = hit + tr.translation;
            to += tr.translation;
            poly = tr.to_edge.poly;
        }
        None
    }

    /// Zero orders (d₁,…,d_m), descending, over classes with d ≥ 1.
    pub fn stratum(&self) -> Vec<usize> {
        let mut ds: Vec<usize> = self
            .vertex_classes
            .iter()
            .filter(|c| c.order >= 1)
            .map(|c| c.order)
            .collect();
        ds.sort_unstable_by(|a, b| b.cmp(a));
        ds
    }

    /// Number of distinct zeros of ρ.
    pub fn zero_count(&self) -> usize {
        self.stratum().len()
    }

    /// ρ ↦ cρ: every vertex and pairing translation multiplied by c.
    pub fn scale(&self, c: Cx) -> Result<Self, SurfaceError> {
        if c.norm() == 0.0 {
            return Err(SurfaceError::ZeroScale);
        }
        let polygons = self
            .polygons
            .iter()
            .map(|p| p.iter().map(|z| z * c).collect())
            .collect();
        Self::new(self.name.clone(), polygons, self.pairings.clone())
    }

    /// Validation report; violations are data, not failures.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let tol = 1e-12 * self.diameter.max(1e-300);

        for (pi, poly) in self.polygons.iter().enumerate() {
            let area = geom::polygon_area(poly);
            if area <= tol * self.diameter {
                violations.push(format!(
                    "polygon {pi} is not positively oriented (signed area {area:.3e})"
                ));
            }
            let n = poly.len();
            for i in 0..n {
                if (poly[(i + 1) % n] - poly[i]).norm() <= tol {
                    violations.push(format!("polygon {pi} edge {i} has zero length"));
                }
            }
            // simplicity: no two non-adjacent edges may cross
            for i in 0..n {
                for j in i + 1..n {
                    if j == i + 1 || (i == 0 && j == n - 1) {
                        continue;
                    }
                    let (a0, a1) = (poly[i], poly[(i + 1) % n]);
                    let (b0, b1) = (poly[j], poly[(j + 1) % n]);
                    if geom::segments_cross(a0, a1, b0, b1, tol) {
                        violations.push(format!("polygon {pi} self-intersects (edges {i}, {j})"));
                    }
                }
            }
        }

        for (pi, edges) in self.pairing_of_edge.iter().enumerate() {
            for (ei, k) in edges.iter().enumerate() {
                if *k == usize::MAX {
                    violations.push(format!("edge ({pi}, {ei}) is unpaired (surface not closed)"));
                }
            }
        }

        for (k, (a, b)) in self.pairings.iter().enumerate() {
            if a == b {
                violations.push(format!("pairing {k} identifies an edge with itself"));
                continue;
            }
            let (a0, a1) = self.edge_endpoints(*a);
            let (b0, b1) = self.edge_endpoints(*b);
            // translation must map a0↦b1 and a1↦b0 (opposite traversal)
            let tau = b1 - a0;
            if ((a1 + tau) - b0).norm() > tol {
                violations.push(format!(
                    "pairing {k} is not a translation match (residual {:.3e})",
                    ((a1 + tau) - b0).norm()
                ));
            }
        }

        // angle sums: every class total must be 2π(d+1), d ≥ 0 integer
        for (ci, class) in self.vertex_classes.iter().enumerate() {
            let turns = class.total_angle / std::f64::consts::TAU;
            let d_plus_1 = turns.round();
            if d_plus_1 < 1.0 || (turns - d_plus_1).abs() > 1e-9 {
                violations.push(format!(
                    "vertex class {ci} has angle sum {:.12} ≠ 2π(d+1) (off by {:.3e} turns)",
                    class.total_angle,
                    (turns - d_plus_1).abs()
                ));
            }
        }

        let total_order: usize = self.vertex_classes.iter().map(|c| c.order).sum();
        let g = self.genus;
        if g < 2 {
            violations.push(format!("genus {g} violates g ≥ 2"));
        }
        if g >= 1 && total_order != 2 * g - 2 {
            violations.push(format!(
                "Σ dᵢ = {total_order} ≠ 2g−2 = {} (Gauss–Bonnet mismatch)",
                2 * g as i64 - 2
            ));
        }

        let stratum = self.stratum();
        let generic = g >= 2 && stratum.len() == 2 * g - 2;
        ValidationReport {
            genus: g,
            stratum,
            generic,
            violations,
        }
    }
}

/// Validation verdict for one surface.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub genus: usize,
    pub stratum: Vec<usize>,
    /// true iff all zeros are simple (m = 2g−2)
    pub generic: bool,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn genus_from_counts(v: usize, e: usize, f: usize) -> usize {
    let chi = v as i64 - e as i64 + f as i64;
    if chi > 2 || chi % 2 != 0 {
        return 0; // nonsensical; validation reports the details
    }
    ((2 - chi) / 2) as usize
}

/// Walks corners around each surface vertex by following edge pairings and
/// sums interior angles per identification class.
fn vertex_classes(
    polygons: &[Vec<Cx>],
    pairings: &[(EdgeRef, EdgeRef)],
    pairing_of_edge: &[Vec<usize>],
) -> Result<(Vec<VertexClass>, Vec<Vec<usize>>), SurfaceError> {
    let partner = |e: EdgeRef| -> Option<EdgeRef> {
        let k = pairing_of_edge[e.poly][e.edge];
        if k == usize::MAX {
            return None;
        }
        let (a, b) = pairings[k];
        Some(if a == e { b } else { a })
    };

    let mut class_of_corner: Vec<Vec<usize>> =
        polygons.iter().map(|p| vec![usize::MAX; p.len()]).collect();
    let mut classes = Vec::new();

    for p in 0..polygons.len() {
        for v in 0..polygons[p].len() {
            if class_of_corner[p][v] != usize::MAX {
                continue;
            }
            let id = classes.len();
            let mut corners = Vec::new();
            let mut total_angle = 0.0;
            let mut cur = CornerRef { poly: p, vertex: v };
            loop {
                if class_of_corner[cur.poly][cur.vertex] != usize::MAX {
                    return Err(SurfaceError::Invalid(format!(
                        "corner walk did not close combinatorially at ({}, {})",
                        cur.poly, cur.vertex
                    )));
                }
                class_of_corner[cur.poly][cur.vertex] = id;
                corners.push(cur);
                let poly = &polygons[cur.poly];
                let n = poly.len();
                let prev = poly[(cur.vertex + n - 1) % n];
                let next = poly[(cur.vertex + 1) % n];
                total_angle += geom::interior_angle(prev, poly[cur.vertex], next);

                // cross the outgoing edge; the tail of (poly, vertex) maps to
                // the head of the partner edge, i.e. corner (q, j+1)
                let out = EdgeRef { poly: cur.poly, edge: cur.vertex };
                match partner(out) {
                    Some(q) => {
                        let nq = polygons[q.poly].len();
                        cur = CornerRef {
                            poly: q.poly,
                            vertex: (q.edge + 1) % nq,
                        };
                    }
                    None => {
                        // unpaired edge: walk cannot continue; validation
                        // reports the open surface, class stays partial
                        break;
                    }
                }
                if cur.poly == p && cur.vertex == v {
                    break;
                }
            }
            let turns = total_angle / std::f64::consts::TAU;
            let order = (turns.round() as i64 - 1).max(0) as usize;
            classes.push(VertexClass {
                corners,
                total_angle,
                order,
            });
        }
    }
    Ok((classes, class_of_corner))
}

/// Built-in fixtures.
///
/// `regular-2n-gon(n)`: the regular 2n-gon with opposite sides identified;
/// `sheared-decagon(s, t)`: the regular decagon mapped by (x, y) ↦ (x+sy, ty).
pub fn builtin_surface(name: &str, params: &[f64]) -> Result<TranslationSurface, SurfaceError> {
    match name {
        "regular-2n-gon" => {
            let n = params
                .first()
                .copied()
                .ok_or_else(|| SurfaceError::BadBuiltinParams("missing n".into()))?;
            if n.fract() != 0.0 || n < 4.0 {
                return Err(SurfaceError::BadBuiltinParams(format!(
                    "regular-2n-gon needs integer n ≥ 4, got {n}"
                )));
            }
            regular_2n_gon(n as usize)
        }
        "octagon" => regular_2n_gon(4),
        "decagon" => regular_2n_gon(5),
        "sheared-decagon" => {
            let s = params.first().copied().unwrap_or(0.0);
            let t = params.get(1).copied().unwrap_or(1.0);
            sheared_decagon(s, t)
        }
        other => Err(SurfaceError::BadBuiltinParams(format!(
            "unknown builtin '{other}'"
        ))),
    }
}

/// Regular 2n-gon (circumradius 1) with opposite sides identified.
pub fn regular_2n_gon(n: usize) -> Result<TranslationSurface, SurfaceError> {
    if n < 4 {
        return Err(SurfaceError::BadBuiltinParams(
            "regular-2n-gon needs n ≥ 4 (genus ≥ 2)".into(),
        ));
    }
    let m = 2 * n;
    // vertex k at angle π/m + 2πk/m so the polygon is symmetric about the x-axis
    let verts: Vec<Cx> = (0..m)
        .map(|k| Cx::from_polar(1.0, std::f64::consts::PI * (1.0 + 2.0 * k as f64) / m as f64))
        .collect();
    let pairings: Vec<(EdgeRef, EdgeRef)> = (0..n)
        .map(|i| {
            (
                EdgeRef { poly: 0, edge: i },
                EdgeRef { poly: 0, edge: i + n },
            )
        })
        .collect();
    TranslationSurface::new(Some(format!("regular-{m}-gon")), vec![verts], pairings)
}

/// Regular decagon under the real-linear map (x, y) ↦ (x + s·y, t·y);
/// stays in stratum (1,1) for t > 0.
pub fn sheared_decagon(s: f64, t: f64) -> Result<TranslationSurface, SurfaceError> {
    if t <= 0.0 {
        return Err(SurfaceError::BadBuiltinParams(format!(
            "sheared-decagon needs stretch t > 0, got {t}"
        )));
    }
    let base = regular_2n_gon(5)?;
    let polygons: Vec<Vec<Cx>> = base
        .polygons
        .iter()
        .map(|p| {
            p.iter()
                .map(|z| Cx::new(z.re + s * z.im, t * z.im))
                .collect()
        })
        .collect();
    TranslationSurface::new(
        Some(format!("sheared-decagon(s={s}, t={t})")),
        polygons,
        base.pairings,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn octagon_has_one_cone_of_order_two() {
        let s = regular_2n_gon(4).unwrap();
        // angle-sum oracle: 8 corners in one class, 8 × 3π/4 = 6π = 2π(2+1)
        assert_eq!(s.vertex_classes.len(), 1);
        assert_relative_eq!(
            s.vertex_classes[0].total_angle,
            6.0 * std::f64::consts::PI,
            epsilon = 1e-9
        );
        assert_eq!(s.stratum(), vec![2]);
        assert_eq!(s.genus, 2);
        let report = s.validate();
        assert!(report.is_valid(), "{:?}", report.violations);
        assert!(!report.generic); // m = 1 < 2g−2 = 2
    }

    #[test]
    fn decagon_has_two_simple_cones() {
        let s = regular_2n_gon(5).unwrap();
        // two classes of 5 corners, 5 × 4π/5 = 4π each
        assert_eq!(s.vertex_classes.len(), 2);
        for c in &s.vertex_classes {
            assert_eq!(c.corners.len(), 5);
            assert_relative_eq!(
                c.total_angle,
                4.0 * std::f64::consts::PI,
                epsilon = 1e-9
            );
        }
        assert_eq!(s.stratum(), vec![1, 1]);
        assert_eq!(s.genus, 2);
        assert!(s.validate().generic); // m = 2 = 2g−2
    }

    #[test]
    fn unit_square_torus_is_rejected() {
        let sq = vec![
            Cx::new(0.0, 0.0),
            Cx::new(1.0, 0.0),
            Cx::new(1.0, 1.0),
            Cx::new(0.0, 1.0),
        ];
        let pairings = vec![
            (EdgeRef { poly: 0, edge: 0 }, EdgeRef { poly: 0, edge: 2 }),
            (EdgeRef { poly: 0, edge: 1 }, EdgeRef { poly: 0, edge: 3 }),
        ];
        let err = TranslationSurface::new(None, vec![sq], pairings).unwrap_err();
        assert!(err.to_string().contains("genus 1"), "{err}");
    }

    #[test]
    fn perturbed_pairing_is_flagged() {
        let s = regular_2n_gon(5).unwrap();
        let mut polys = s.polygons.clone();
        polys[0][0] += Cx::new(1e-3, 0.0);
        let raw =
            TranslationSurface::build_unchecked(None, polys, s.pairings.clone()).unwrap();
        let report = raw.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("not a translation match")));
    }

    #[test]
    fn parse_round_trip_and_unknown_key_rejection() {
        let s = regular_2n_gon(4).unwrap();
        let doc = s.to_document();
        let back = TranslationSurface::parse(&doc).unwrap();
        assert_eq!(back.stratum(), vec![2]);

        let bad = r#"{"polygons": [], "pairings": [], "mystery": 1}"#;
        assert!(matches!(
            TranslationSurface::parse(bad),
            Err(SurfaceError::Parse(_))
        ));
    }

    #[test]
    fn parse_reports_dangling_pairing() {
        let doc = r#"{
            "polygons": [[[0,0],[1,0],[1,1],[0,1]]],
            "pairings": [[[0,0],[0,9]]]
        }"#;
        let err = TranslationSurface::parse(doc).unwrap_err();
        assert!(matches!(err, SurfaceError::BadEdgeRef { .. }), "{err}");
    }

    #[test]
    fn transition_octagon_midpoint_lands_on_opposite_midpoint() {
        let s = regular_2n_gon(4).unwrap();
        let e = EdgeRef { poly: 0, edge: 0 };
        let (a0, a1) = s.edge_endpoints(e);
        let mid = 0.5 * (a0 + a1);
        let dir = Cx::new(0.3, -1.2); // arbitrary outward-ish direction
        let (img, dir2, t) = s.transition(e, mid, dir).unwrap();
        let (b0, b1) = s.edge_endpoints(t.to_edge);
        assert_relative_eq!((img - 0.5 * (b0 + b1)).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(dir, dir2);
        assert_eq!(t.to_edge, EdgeRef { poly: 0, edge: 4 });

        // involution: crossing back returns the original point
        let (back, _, _) = s.transition(t.to_edge, img, dir).unwrap();
        assert!((back - mid).norm() <= 1e-12 * s.diameter);
    }

    #[test]
    fn transition_rejects_cone_vertex() {
        let s = regular_2n_gon(4).unwrap();
        let e = EdgeRef { poly: 0, edge: 2 };
        let (a0, _) = s.edge_endpoints(e);
        assert!(matches!(
            s.transition(e, a0, Cx::new(1.0, 0.0)),
            Err(SurfaceError::ConePoint)
        ));
    }

    #[test]
    fn sheared_decagon_stays_in_stratum_1_1() {
        let s = sheared_decagon(0.3, 1.1).unwrap();
        let report = s.validate();
        assert!(report.is_valid(), "{:?}", report.violations);
        assert_eq!(report.stratum, vec![1, 1]);
        // identity parameters reproduce the regular decagon
        let id = sheared_decagon(0.0, 1.0).unwrap();
        let reg = regular_2n_gon(5).unwrap();
        for (a, b) in id.polygons[0].iter().zip(&reg.polygons[0]) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn gauss_bonnet_total_defect() {
        for s in [regular_2n_gon(4).unwrap(), regular_2n_gon(6).unwrap()] {
            let defect: f64 = s
                .vertex_classes
                .iter()
                .map(|c| 2.0 * std::f64::consts::PI * c.order as f64)
                .sum();
            assert_relative_eq!(
                defect,
                std::f64::consts::TAU * (2.0 * s.genus as f64 - 2.0),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn scale_is_multiplicative_and_angle_preserving() {
        let s = regular_2n_gon(5).unwrap();
        let c = Cx::new(0.0, 2.0); // 2i
        let sc = s.scale(c).unwrap();
        assert_eq!(sc.stratum(), vec![1, 1]);
        for (a, b) in sc.polygons[0].iter().zip(&s.polygons[0]) {
            assert!((a - b * c).norm() < 1e-14);
        }
        assert!(matches!(
            s.scale(Cx::new(0.0, 0.0)),
            Err(SurfaceError::ZeroScale)
        ));
    }
}
