//! Small planar-geometry helpers shared by every module.
//!
//! Chart points are complex numbers (`z = x + i y`); rotations are complex
//! multiplications and developed displacements are plain differences. The
//! few pieces of 2×2 linear algebra (Hessian eigendata) are closed-form.

use num_complex::Complex64;

pub type Cx = Complex64;

/// Euclidean dot product of two chart vectors.
#[inline]
pub fn dot(a: Cx, b: Cx) -> f64 {
    a.re * b.re + a.im * b.im
}

/// z-component of the cross product (positive when `b` lies ccw of `a`).
#[inline]
pub fn cross(a: Cx, b: Cx) -> f64 {
    a.re * b.im - a.im * b.re
}

/// Interior angle at vertex `v` between incoming edge `prev -> v` and
/// outgoing edge `v -> next`, measured inside a positively oriented polygon.
/// Result lies in (0, 2π).
pub fn interior_angle(prev: Cx, v: Cx, next: Cx) -> f64 {
    let a = prev - v; // direction back along the incoming edge
    let b = next - v; // direction of the outgoing edge
    // angle from b to a, ccw, which is the interior wedge for ccw polygons
    let ang = cross(b, a).atan2(dot(b, a));
    if ang <= 0.0 {
        ang + std::f64::consts::TAU
    } else {
        ang
    }
}

/// Signed area of a closed vertex loop (positive for ccw orientation).
pub fn polygon_area(poly: &[Cx]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        s += cross(poly[i], poly[(i + 1) % n]);
    }
    0.5 * s
}

/// Axis-aligned bounding box as (min, max) corners.
pub fn bbox(points: &[Cx]) -> (Cx, Cx) {
    let mut lo = Cx::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Cx::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo.re = lo.re.min(p.re);
        lo.im = lo.im.min(p.im);
        hi.re = hi.re.max(p.re);
        hi.im = hi.im.max(p.im);
    }
    (lo, hi)
}

/// Diameter of a point set (max pairwise distance; fine for small inputs).
pub fn diameter(points: &[Cx]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d = d.max((points[i] - points[j]).norm());
        }
    }
    d
}

/// Distance from `p` to the segment `a..b`.
pub fn dist_point_segment(p: Cx, a: Cx, b: Cx) -> f64 {
    let ab = b - a;
    let len2 = dot(ab, ab);
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = (dot(p - a, ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Crossing-number point-in-polygon test (boundary points are "inside"
/// only up to floating error; pair with `dist_point_segment` when the
/// distinction matters).
pub fn point_in_polygon(p: Cx, poly: &[Cx]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.im > p.im) != (b.im > p.im) {
            let x = a.re + (p.im - a.im) / (b.im - a.im) * (b.re - a.re);
            if p.re < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Distance from `p` to the polygon boundary.
pub fn dist_to_boundary(p: Cx, poly: &[Cx]) -> f64 {
    let n = poly.len();
    let mut d = f64::INFINITY;
    for i in 0..n {
        d = d.min(dist_point_segment(p, poly[i], poly[(i + 1) % n]));
    }
    d
}

/// Parameter `t in (t_min, 1]` of the first crossing of segment `p0 + t (p1-p0)`
/// with segment `a..b`, or None. Robust enough for step-sized queries.
pub fn segment_intersection_param(p0: Cx, p1: Cx, a: Cx, b: Cx, t_min: f64) -> Option<f64> {
    let r = p1 - p0;
    let s = b - a;
    let denom = cross(r, s);
    if denom.abs() < 1e-300 {
        return None;
    }
    let qp = a - p0;
    let t = cross(qp, s) / denom;
    let u = cross(qp, r) / denom;
    if t > t_min && t <= 1.0 + 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Tests whether two open segments intersect transversally (shared endpoints
/// within `tol` do not count).
pub fn segments_cross(a0: Cx, a1: Cx, b0: Cx, b1: Cx, tol: f64) -> bool {
    for (p, q) in [(a0, b0), (a0, b1), (a1, b0), (a1, b1)] {
        if (p - q).norm() <= tol {
            return false;
        }
    }
    let d1 = cross(a1 - a0, b0 - a0);
    let d2 = cross(a1 - a0, b1 - a0);
    let d3 = cross(b1 - b0, a0 - b0);
    let d4 = cross(b1 - b0, a1 - b0);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Symmetric 2×2 matrix with closed-form eigendata.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SymMat2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMat2 {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Eigenvalues (λ₁ ≤ λ₂) with unit eigenvectors, λ₁'s first.
    pub fn eigen(&self) -> (f64, f64, Cx, Cx) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let disc = (half_diff * half_diff + self.xy * self.xy).sqrt();
        let l1 = mean - disc;
        let l2 = mean + disc;
        // eigenvector for l2: (xy, l2 - xx) or (l2 - yy, xy), whichever is well conditioned
        let v2 = if self.xy.abs() > 1e-300 {
            let v = Cx::new(self.xy, l2 - self.xx);
            v / v.norm()
        } else if self.xx >= self.yy {
            Cx::new(1.0, 0.0)
        } else {
            Cx::new(0.0, 1.0)
        };
        let v1 = Cx::new(-v2.im, v2.re); // perpendicular
        (l1, l2, v1, v2)
    }

    /// Applies the matrix to a vector.
    pub fn mul_vec(&self, v: Cx) -> Cx {
        Cx::new(self.xx * v.re + self.xy * v.im, self.xy * v.re + self.yy * v.im)
    }

    /// Solves `H x = b`; None when (numerically) singular.
    pub fn solve(&self, b: Cx) -> Option<Cx> {
        let det = self.det();
        let scale = self.xx.abs().max(self.yy.abs()).max(self.xy.abs());
        if det.abs() <= 1e-14 * scale * scale {
            return None;
        }
        Some(Cx::new(
            (self.yy * b.re - self.xy * b.im) / det,
            (-self.xy * b.re + self.xx * b.im) / det,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interior_angles_of_a_square_are_right() {
        let sq = [
            Cx::new(0.0, 0.0),
            Cx::new(1.0, 0.0),
            Cx::new(1.0, 1.0),
            Cx::new(0.0, 1.0),
        ];
        for i in 0..4 {
            let prev = sq[(i + 3) % 4];
            let next = sq[(i + 1) % 4];
            assert_relative_eq!(
                interior_angle(prev, sq[i], next),
                std::f64::consts::FRAC_PI_2,
                epsilon = 1e-14
            );
        }
        assert_relative_eq!(polygon_area(&sq), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn reflex_interior_angle_exceeds_pi() {
        // an L-shaped hexagon has one 3π/2 corner
        let l = [
            Cx::new(0.0, 0.0),
            Cx::new(2.0, 0.0),
            Cx::new(2.0, 1.0),
            Cx::new(1.0, 1.0),
            Cx::new(1.0, 2.0),
            Cx::new(0.0, 2.0),
        ];
        let ang = interior_angle(l[2], l[3], l[4]);
        assert_relative_eq!(ang, 1.5 * std::f64::consts::PI, epsilon = 1e-14);
    }

    #[test]
    fn eigen_recovers_symmetric_matrix() {
        let m = SymMat2::new(2.0, -0.7, -1.0);
        let (l1, l2, v1, v2) = m.eigen();
        assert!(l1 <= l2);
        let r1 = m.mul_vec(v1) - v1 * l1;
        let r2 = m.mul_vec(v2) - v2 * l2;
        assert!(r1.norm() < 1e-12 && r2.norm() < 1e-12);
        assert_relative_eq!(l1 + l2, m.trace(), epsilon = 1e-12);
        assert_relative_eq!(l1 * l2, m.det(), epsilon = 1e-12);
    }

    #[test]
    fn segment_intersection_finds_first_crossing() {
        let t = segment_intersection_param(
            Cx::new(0.0, 0.0),
            Cx::new(2.0, 0.0),
            Cx::new(1.0, -1.0),
            Cx::new(1.0, 1.0),
            0.0,
        )
        .unwrap();
        assert_relative_eq!(t, 0.5, epsilon = 1e-14);
    }
}
