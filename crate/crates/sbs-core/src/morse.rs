//! Critical points of Ψ and the count identities.
//!
//! Strict convexity (Δu = 2πe^{2u} > 0) forbids interior maxima, so only
//! minima and saddles occur; on the surface punctured at the m zeros the
//! Morse count reads ♯saddle − ♯min = 2g−2+m (χ of the punctured surface is
//! 2−2g−m and u exhausts it toward the punctures).
//!
//! Two independent routes are implemented: a seeded Newton search on the
//! recovered gradient field, and a combinatorial census of the nodal values
//! over the glued mesh graph (`nodal_census`) in the style of piecewise
//! linear Morse theory. They are kept free of shared logic so one can audit
//! the other.

use crate::geom::{Cx, SymMat2};
use crate::liouville::MetricField;
use crate::parallel::{map_items, ExecMode};
use crate::surface::TranslationSurface;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CritKind {
    Minimum,
    Saddle,
    Degenerate,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalPoint {
    pub poly: usize,
    pub re: f64,
    pub im: f64,
    pub kind: CritKind,
    pub u: f64,
    /// Hessian eigenvalues, λ₁ ≤ λ₂.
    pub lambda: [f64; 2],
    /// Unit eigenvectors of λ₁ and λ₂ (as re/im pairs).
    pub eigvec1: [f64; 2],
    pub eigvec2: [f64; 2],
    /// |∇u| at the reported position.
    pub grad_norm: f64,
}

impl CriticalPoint {
    pub fn pos(&self) -> Cx {
        Cx::new(self.re, self.im)
    }
    pub fn v1(&self) -> Cx {
        Cx::new(self.eigvec1[0], self.eigvec1[1])
    }
    pub fn v2(&self) -> Cx {
        Cx::new(self.eigvec2[0], self.eigvec2[1])
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalSet {
    pub points: Vec<CriticalPoint>,
    pub minima: usize,
    pub saddles: usize,
    pub degenerate: usize,
    pub unconverged_seeds: usize,
    pub total_seeds: usize,
    pub grad_tol: f64,
    pub eps_deg: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MorseConfig {
    /// Coarse seeding grid resolution across the surface diameter.
    pub seed_density: usize,
    /// Relative degeneracy threshold (× max sampled |λ|).
    pub eps_deg_rel: f64,
    pub max_iters: usize,
}

impl Default for MorseConfig {
    fn default() -> Self {
        Self {
            seed_density: 24,
            eps_deg_rel: 1e-6,
            max_iters: 80,
        }
    }
}

/// Classification by eigenvalue signs relative to the degeneracy threshold.
pub fn classify(lambda1: f64, lambda2: f64, eps_deg: f64) -> CritKind {
    if lambda1.abs() <= eps_deg || lambda2.abs() <= eps_deg {
        CritKind::Degenerate
    } else if lambda1 > 0.0 {
        CritKind::Minimum
    } else if lambda2 > 0.0 {
        CritKind::Saddle
    } else {
        // λ₂ < −ε: a maximum, forbidden by Δu > 0; surfaced as degenerate
        // so downstream checks fail loudly rather than silently counting it
        CritKind::Degenerate
    }
}

/// Newton search for all finite critical points of Ψ.
pub fn find_critical_points(
    surface: &TranslationSurface,
    field: &MetricField,
    cfg: &MorseConfig,
    mode: ExecMode,
) -> CriticalSet {
    let mesh = &field.mesh;
    let r_excl = field.r_exclude().max(3.0 * mesh.h_min);
    let grad_tol = 1e-9 * field.u_range() / mesh.diameter;

    // seeds: triangles whose nodal gradient directions disagree …
    let mut seeds: Vec<(usize, Cx)> = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if tri.iter().any(|&n| mesh.cone_node[n]) {
            continue;
        }
        let poly = mesh.tri_poly[t];
        let g: Vec<Cx> = tri
            .iter()
            .map(|&n| {
                field.grad_rec[mesh.dof_of_node[n]]
                    + field.singular.grad(poly, mesh.node_pos(n))
            })
            .collect();
        let disagree = crate::geom::dot(g[0], g[1]) < 0.0
            || crate::geom::dot(g[1], g[2]) < 0.0
            || crate::geom::dot(g[0], g[2]) < 0.0;
        if disagree {
            let c = (mesh.node_pos(tri[0]) + mesh.node_pos(tri[1]) + mesh.node_pos(tri[2])) / 3.0;
            seeds.push((poly, c));
        }
    }
    // … plus a coarse uniform grid
    let spacing = mesh.diameter / cfg.seed_density as f64;
    for (p, poly) in mesh.polygons.iter().enumerate() {
        let (lo, hi) = crate::geom::bbox(poly);
        let nx = ((hi.re - lo.re) / spacing).ceil() as usize;
        let ny = ((hi.im - lo.im) / spacing).ceil() as usize;
        for j in 0..=ny {
            for i in 0..=nx {
                let z = Cx::new(
                    lo.re + (i as f64 + 0.5) * spacing,
                    lo.im + (j as f64 + 0.5) * spacing,
                );
                if crate::geom::point_in_polygon(z, poly) {
                    seeds.push((p, z));
                }
            }
        }
    }
    let total_seeds = seeds.len();

    let refined: Vec<Option<(usize, Cx)>> = map_items(mode, &seeds, |&(poly, z)| {
        refine_seed(surface, field, poly, z, r_excl, grad_tol, cfg.max_iters)
    });
    let unconverged_seeds = refined.iter().filter(|r| r.is_none()).count();

    // deterministic dedupe: sort by position, merge within r_merge = 2h
    let mut cands: Vec<(usize, Cx)> = refined.into_iter().flatten().collect();
    cands.sort_by(|a, b| {
        (a.0, a.1.re, a.1.im)
            .partial_cmp(&(b.0, b.1.re, b.1.im))
            .unwrap()
    });
    let r_merge = 2.0 * mesh.h;
    let mut kept: Vec<(usize, Cx)> = Vec::new();
    'cand: for (poly, z) in cands {
        for (kp, kz) in &kept {
            if surface_close(surface, *kp, *kz, poly, z, r_merge) {
                continue 'cand;
            }
        }
        kept.push((poly, z));
    }

    // eigendata, then scale-aware classification
    let mut raw: Vec<(usize, Cx, f64, f64, f64, Cx, Cx, f64)> = Vec::new();
    let mut max_abs_lambda: f64 = 0.0;
    for (poly, z) in kept {
        if let Some(e) = field.eval_unguarded(poly, z) {
            let (l1, l2, v1, v2) = e.hess.eigen();
            max_abs_lambda = max_abs_lambda.max(l1.abs()).max(l2.abs());
            raw.push((poly, z, e.u, l1, l2, v1, v2, e.grad.norm()));
        }
    }
    let eps_deg = cfg.eps_deg_rel * max_abs_lambda;
    let mut points: Vec<CriticalPoint> = raw
        .into_iter()
        .map(|(poly, z, u, l1, l2, v1, v2, gn)| CriticalPoint {
            poly,
            re: z.re,
            im: z.im,
            kind: classify(l1, l2, eps_deg),
            u,
            lambda: [l1, l2],
            eigvec1: [v1.re, v1.im],
            eigvec2: [v2.re, v2.im],
            grad_norm: gn,
        })
        .collect();
    points.sort_by(|a, b| {
        (a.poly, a.re, a.im)
            .partial_cmp(&(b.poly, b.re, b.im))
            .unwrap()
    });

    let minima = points.iter().filter(|p| p.kind == CritKind::Minimum).count();
    let saddles = points.iter().filter(|p| p.kind == CritKind::Saddle).count();
    let degenerate = points.iter().filter(|p| p.kind == CritKind::Degenerate).count();
    CriticalSet {
        points,
        minima,
        saddles,
        degenerate,
        unconverged_seeds,
        total_seeds,
        grad_tol,
        eps_deg,
    }
}

/// True when the two chart points coincide on the surface within `tol`
/// (same chart, or images under one pairing translation).
fn surface_close(
    surface: &TranslationSurface,
    pa: usize,
    a: Cx,
    pb: usize,
    b: Cx,
    tol: f64,
) -> bool {
    if pa == pb && (a - b).norm() <= tol {
        return true;
    }
    for e in 0..surface.polygons[pa].len() {
        if let Some(t) = surface.partner(crate::surface::EdgeRef { poly: pa, edge: e }) {
            if t.to_edge.poly == pb && (a + t.translation - b).norm() <= tol {
                return true;
            }
        }
    }
    false
}

/// Damped Newton on the interpolated gradient field, using its exact
/// per-triangle Jacobian (plus the analytic profile Hessian).
fn refine_seed(
    surface: &TranslationSurface,
    field: &MetricField,
    mut poly: usize,
    mut z: Cx,
    r_excl: f64,
    grad_tol: f64,
    max_iters: usize,
) -> Option<(usize, Cx)> {
    let mesh = &field.mesh;
    let step_cap = mesh.h;
    let mut g = gradient_at(field, poly, z)?;
    for _ in 0..max_iters {
        if g.norm() <= grad_tol {
            if mesh.nearest_cone(poly, z).map_or(true, |(_, d)| d >= r_excl) {
                return Some((poly, z));
            }
            return None;
        }
        let jac = gradient_jacobian(field, poly, z)?;
        // solve J δ = −g (general 2×2)
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let scale = jac
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let mut delta = if det.abs() > 1e-14 * scale * scale {
            Cx::new(
                (-g.re * jac[1][1] + g.im * jac[0][1]) / det,
                (g.re * jac[1][0] - g.im * jac[0][0]) / det,
            )
        } else {
            -g * (mesh.h_min / g.norm())
        };
        if delta.norm() > step_cap {
            delta *= step_cap / delta.norm();
        }
        // damping: require |g| to decrease
        let mut alpha = 1.0;
        let mut advanced = false;
        for _ in 0..20 {
            let target = z + delta * alpha;
            if let Some((p2, _, t2)) = surface.carry(poly, z, target) {
                if let Some(g2) = gradient_at(field, p2, t2) {
                    if g2.norm() < g.norm() {
                        poly = p2;
                        z = t2;
                        g = g2;
                        advanced = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !advanced {
            return None;
        }
        if mesh.nearest_cone(poly, z).map_or(false, |(_, d)| d < 0.5 * r_excl) {
            return None; // diverging into a cone neighborhood
        }
    }
    if g.norm() <= grad_tol {
        Some((poly, z))
    } else {
        None
    }
}

fn gradient_at(field: &MetricField, poly: usize, z: Cx) -> Option<Cx> {
    field.eval_unguarded(poly, z).map(|e| e.grad)
}

/// Exact Jacobian of the interpolated recovered-gradient field within the
/// containing triangle, plus the analytic Hessian of the singular part.
fn gradient_jacobian(field: &MetricField, poly: usize, z: Cx) -> Option<[[f64; 2]; 2]> {
    let mesh = &field.mesh;
    let (t, _) = mesh.locate(poly, z)?;
    let [a, b, c] = mesh.triangles[t];
    let verts = [mesh.node_pos(a), mesh.node_pos(b), mesh.node_pos(c)];
    let area = mesh.tri_area(t);
    let rot90 = |v: Cx| Cx::new(-v.im, v.re);
    let lg = [
        rot90(verts[2] - verts[1]) / (2.0 * area),
        rot90(verts[0] - verts[2]) / (2.0 * area),
        rot90(verts[1] - verts[0]) / (2.0 * area),
    ];
    let dofs = [
        mesh.dof_of_node[a],
        mesh.dof_of_node[b],
        mesh.dof_of_node[c],
    ];
    let mut j = [[0.0f64; 2]; 2];
    for i in 0..3 {
        let g = field.grad_rec[dofs[i]];
        j[0][0] += g.re * lg[i].re;
        j[0][1] += g.re * lg[i].im;
        j[1][0] += g.im * lg[i].re;
        j[1][1] += g.im * lg[i].im;
    }
    let sh: SymMat2 = field.singular.hess(poly, z);
    j[0][0] += sh.xx;
    j[0][1] += sh.xy;
    j[1][0] += sh.xy;
    j[1][1] += sh.yy;
    Some(j)
}

/// Census of nodal extrema over the glued mesh graph (piecewise linear Morse
/// counting): a node is a minimum when every link neighbor is higher, a
/// saddle of multiplicity k when the sign of (neighbor − node) changes 2k+2
/// times around its link. Cone nodes count as +∞ (the punctures).
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct NodalCensus {
    pub minima: usize,
    /// Saddles counted with multiplicity.
    pub saddles: usize,
    pub maxima: usize,
    pub broken_links: usize,
}

pub fn nodal_census(field: &MetricField) -> NodalCensus {
    let mesh = &field.mesh;
    let nd = mesh.num_dofs;

    // representative u value per dof, +∞ at cones
    let mut u = vec![f64::INFINITY; nd];
    let mut cone_dof = vec![false; nd];
    for (n, node) in mesh.nodes.iter().enumerate() {
        let d = mesh.dof_of_node[n];
        if mesh.cone_node[n] {
            cone_dof[d] = true;
        } else if u[d].is_infinite() {
            u[d] = field.v[d] + field.singular.value(node.poly, node.pos());
        }
    }

    // link successor maps per dof: for ccw triangle (d, x, y), succ[x] = y
    let mut succ: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nd];
    for tri in &mesh.triangles {
        let d = [
            mesh.dof_of_node[tri[0]],
            mesh.dof_of_node[tri[1]],
            mesh.dof_of_node[tri[2]],
        ];
        for i in 0..3 {
            succ[d[i]].push((d[(i + 1) % 3], d[(i + 2) % 3]));
        }
    }

    let higher = |a: usize, b: usize| -> bool {
        // is u[a] > u[b], ties broken by index (simulation of simplicity)
        (u[a], a) > (u[b], b)
    };

    let mut census = NodalCensus::default();
    for d in 0..nd {
        if cone_dof[d] {
            continue;
        }
        // chain the link into a cycle
        let edges = &succ[d];
        if edges.is_empty() {
            census.broken_links += 1;
            continue;
        }
        let mut cycle = Vec::with_capacity(edges.len());
        let start = edges
            .iter()
            .map(|(a, _)| *a)
            .min()
            .expect("nonempty link");
        let mut cur = start;
        let mut ok = true;
        for _ in 0..edges.len() {
            cycle.push(cur);
            match edges.iter().find(|(a, _)| *a == cur) {
                Some((_, b)) => cur = *b,
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || cur != start || cycle.len() != edges.len() {
            census.broken_links += 1;
            continue;
        }
        let signs: Vec<bool> = cycle.iter().map(|&nb| higher(nb, d)).collect();
        let mut changes = 0usize;
        for i in 0..signs.len() {
            if signs[i] != signs[(i + 1) % signs.len()] {
                changes += 1;
            }
        }
        if changes == 0 {
            if signs[0] {
                census.minima += 1;
            } else {
                census.maxima += 1;
            }
        } else if changes >= 4 {
            census.saddles += changes / 2 - 1;
        }
    }
    census
}

/// The count identity ♯saddle − ♯min = 2g−2+m.
#[derive(Clone, Debug, Serialize)]
pub struct MorseCheck {
    pub genus: usize,
    pub zeros: usize,
    pub minima: usize,
    pub saddles: usize,
    pub expected_excess: i64,
    pub actual_excess: i64,
    pub pass: bool,
    pub skipped_degenerate: bool,
}

pub fn morse_check(set: &CriticalSet, genus: usize, zeros: usize) -> MorseCheck {
    let expected = 2 * genus as i64 - 2 + zeros as i64;
    let actual = set.saddles as i64 - set.minima as i64;
    let skipped = set.degenerate > 0;
    MorseCheck {
        genus,
        zeros,
        minima: set.minima,
        saddles: set.saddles,
        expected_excess: expected,
        actual_excess: actual,
        pass: !skipped && actual == expected,
        skipped_degenerate: skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liouville::{solve, SolverConfig};
    use crate::mesh::Mesh;
    use crate::surface::regular_2n_gon;

    #[test]
    fn classify_thresholds() {
        assert_eq!(classify(0.5, 2.0, 1e-6), CritKind::Minimum);
        assert_eq!(classify(-1.0, 3.0, 1e-6), CritKind::Saddle);
        assert_eq!(classify(1e-12, 2.0, 1e-6), CritKind::Degenerate);
        assert_eq!(classify(-3.0, -2.0, 1e-6), CritKind::Degenerate); // would-be maximum
    }

    fn octagon_field() -> (crate::surface::TranslationSurface, MetricField) {
        let s = regular_2n_gon(4).unwrap();
        let mesh = Mesh::triangulate(&s, 0.08, 0.6, 0.08 / 50.0).unwrap();
        let f = solve(&mesh, &SolverConfig::default()).unwrap();
        (s, f)
    }

    #[test]
    fn octagon_critical_points() {
        let (s, f) = octagon_field();
        let set = find_critical_points(&s, &f, &MorseConfig::default(), ExecMode::default());

        // no maxima ever
        assert_eq!(
            set.points
                .iter()
                .filter(|p| p.lambda[1] < -set.eps_deg && p.lambda[0] < -set.eps_deg)
                .count(),
            0
        );
        assert!(set.minima >= 1);
        assert_eq!(set.degenerate, 0, "unexpected degenerate points");

        // count identity for g=2, m=1
        let check = morse_check(&set, 2, 1);
        assert!(
            check.pass,
            "saddle − min = {} (want 3); set: {} min {} saddles",
            check.actual_excess, set.minima, set.saddles
        );

        // the rotation-fixed center appears
        assert!(set
            .points
            .iter()
            .any(|p| p.pos().norm() < 1e-3 * f.mesh.diameter));

        // critical set is invariant under the π/4 rotation as a set
        let rot = Cx::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        for p in &set.points {
            let rz = p.pos() * rot;
            assert!(
                set.points
                    .iter()
                    .any(|q| (q.pos() - rz).norm() < 2e-3 * f.mesh.diameter),
                "orbit of {:?} broken",
                p.pos()
            );
        }

        // independent census agrees
        let census = nodal_census(&f);
        assert_eq!(census.maxima, 0);
        assert_eq!(census.minima, set.minima, "census vs finder minima");
        assert_eq!(census.saddles, set.saddles, "census vs finder saddles");
    }

    #[test]
    fn decagon_count_identity() {
        let s = regular_2n_gon(5).unwrap();
        let mesh = Mesh::triangulate(&s, 0.08, 0.6, 0.08 / 50.0).unwrap();
        let f = solve(&mesh, &SolverConfig::default()).unwrap();
        let set = find_critical_points(&s, &f, &MorseConfig::default(), ExecMode::default());
        let check = morse_check(&set, 2, 2);
        assert!(
            check.pass,
            "saddle − min = {} (want 4); {} min {} saddles, {} degenerate",
            check.actual_excess, set.minima, set.saddles, set.degenerate
        );
        let census = nodal_census(&f);
        assert_eq!(census.minima, set.minima);
        assert_eq!(census.saddles, set.saddles);
    }

    #[test]
    fn morse_check_formula_cases() {
        let fake = |minima: usize, saddles: usize| CriticalSet {
            points: Vec::new(),
            minima,
            saddles,
            degenerate: 0,
            unconverged_seeds: 0,
            total_seeds: 0,
            grad_tol: 0.0,
            eps_deg: 0.0,
        };
        // g=2, m=2: excess 4; g=2, m=1: excess 3; g=3, m=4: excess 8
        assert!(morse_check(&fake(2, 6), 2, 2).pass);
        assert!(morse_check(&fake(1, 4), 2, 1).pass);
        assert!(morse_check(&fake(1, 9), 3, 4).pass);
        assert!(!morse_check(&fake(2, 5), 2, 2).pass);
    }
}
