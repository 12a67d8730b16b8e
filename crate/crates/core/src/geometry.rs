//! Planar geometry primitives shared by the mesh and spline layers.

use crate::scalar::Real;
use nalgebra::{Point2, Vector2};

pub type Pt<S> = Point2<S>;
pub type Vec2<S> = Vector2<S>;

/// Twice the signed area of the triangle `(a, b, c)`; positive when CCW.
#[inline]
pub fn cross2<S: Real>(a: &Pt<S>, b: &Pt<S>, c: &Pt<S>) -> S {
    let u = b - a;
    let v = c - a;
    u.x * v.y - u.y * v.x
}

#[inline]
pub fn signed_area<S: Real>(a: &Pt<S>, b: &Pt<S>, c: &Pt<S>) -> S {
    cross2(a, b, c) / S::of(2.0)
}

/// Barycentric coordinates of `p` with respect to the triangle `(a, b, c)`.
pub fn barycentric<S: Real>(corners: &[Pt<S>; 3], p: &Pt<S>) -> [S; 3] {
    let [a, b, c] = corners;
    let d = cross2(a, b, c);
    let l0 = cross2(p, b, c) / d;
    let l1 = cross2(a, p, c) / d;
    let l2 = cross2(a, b, p) / d;
    [l0, l1, l2]
}

/// Barycentric representation of a direction vector: the linear part of the
/// barycentric map, so the components sum to zero.
pub fn barycentric_dir<S: Real>(corners: &[Pt<S>; 3], u: &Vec2<S>) -> [S; 3] {
    let [a, b, c] = corners;
    let d = cross2(a, b, c);
    // Gradient of each barycentric coordinate dotted with u.
    let g0 = Vec2::new(b.y - c.y, c.x - b.x) / d;
    let g1 = Vec2::new(c.y - a.y, a.x - c.x) / d;
    let g2 = Vec2::new(a.y - b.y, b.x - a.x) / d;
    [g0.dot(u), g1.dot(u), g2.dot(u)]
}

/// Intersection of the segment `p0-p1` with the segment `q0-q1`.
///
/// Returns the parameters `(s, t)` along the two segments when the supporting
/// lines are not parallel, without clamping to `[0, 1]`.
pub fn line_intersection<S: Real>(
    p0: &Pt<S>,
    p1: &Pt<S>,
    q0: &Pt<S>,
    q1: &Pt<S>,
) -> Option<(S, S)> {
    let r = p1 - p0;
    let d = q1 - q0;
    let denom = r.x * d.y - r.y * d.x;
    if denom == S::zero() {
        return None;
    }
    let w = q0 - p0;
    let s = (w.x * d.y - w.y * d.x) / denom;
    let t = (w.x * r.y - w.y * r.x) / denom;
    Some((s, t))
}

/// Whether `p` lies on the closed segment `a-b` within `tol` (absolute).
pub fn point_on_segment<S: Real>(a: &Pt<S>, b: &Pt<S>, p: &Pt<S>, tol: S) -> bool {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == S::zero() {
        return (p - a).norm() <= tol;
    }
    let t = (p - a).dot(&ab) / len2;
    let t = t.clamp(S::zero(), S::one());
    let proj = a + ab * t;
    (p - proj).norm() <= tol
}

/// Convex hull in CCW order (Andrew's monotone chain). Collinear points on
/// the hull boundary are dropped.
pub fn convex_hull<S: Real>(points: &[Pt<S>]) -> Vec<Pt<S>> {
    let mut pts: Vec<Pt<S>> = points.to_vec();
    pts.sort_by(|p, q| {
        p.x.partial_cmp(&q.x)
            .unwrap()
            .then(p.y.partial_cmp(&q.y).unwrap())
    });
    pts.dedup_by(|p, q| *p == *q);
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Pt<S>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2
            && cross2(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= S::zero()
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Pt<S>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2
            && cross2(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= S::zero()
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Smallest triangle with prescribed side directions that contains `hull`.
///
/// `angles` are the outward-normal-free side directions; each side of the
/// triangle is the supporting line of the hull in the half-plane below that
/// direction. Returns the corner points (CCW) and the area, or `None` when
/// the directions do not close a triangle.
fn supporting_triangle<S: Real>(hull: &[Pt<S>], angles: [S; 3]) -> Option<([Pt<S>; 3], S)> {
    // For each direction, find the supporting line: the line with direction
    // `d` such that all hull points lie on its left side.
    let mut lines: Vec<(Pt<S>, Vec2<S>)> = Vec::with_capacity(3);
    for ang in angles {
        let d = Vec2::new(ang.cos(), ang.sin());
        let n = Vec2::new(-d.y, d.x); // left normal
        let mut best = hull[0];
        let mut best_off = n.dot(&best.coords);
        for p in hull.iter().skip(1) {
            let off = n.dot(&p.coords);
            if off < best_off {
                best_off = off;
                best = *p;
            }
        }
        lines.push((best, d));
    }
    let mut corners = [Pt::origin(); 3];
    for k in 0..3 {
        let (p0, d0) = lines[k];
        let (p1, d1) = lines[(k + 1) % 3];
        let (s, _) = line_intersection(&p0, &(p0 + d0), &p1, &(p1 + d1))?;
        corners[(k + 1) % 3] = p0 + d0 * s;
    }
    let area = signed_area(&corners[0], &corners[1], &corners[2]);
    if area <= S::zero() {
        return None;
    }
    // All hull points must be inside (they are, by supporting-line
    // construction, up to roundoff).
    Some((corners, area))
}

/// Near-minimal-area enclosing triangle of a point set.
///
/// Scans equiangular side-direction candidates (plus the hull edge
/// directions) and keeps the smallest supporting triangle. When
/// `fixed_side_dir` is given, one side is constrained to that direction,
/// which callers use to align a side with a straight domain boundary.
pub fn enclosing_triangle<S: Real>(
    points: &[Pt<S>],
    fixed_side_dir: Option<Vec2<S>>,
) -> Option<[Pt<S>; 3]> {
    if points.len() < 3 {
        return None;
    }
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return None;
    }
    let two_thirds_pi = S::of(2.0) * S::PI() / S::of(3.0);
    let mut best: Option<([Pt<S>; 3], S)> = None;
    let mut consider = |cand: Option<([Pt<S>; 3], S)>| {
        if let Some((tri, area)) = cand {
            match &best {
                Some((_, a)) if *a <= area => {}
                _ => best = Some((tri, area)),
            }
        }
    };
    match fixed_side_dir {
        Some(dir) => {
            let base = dir.y.atan2(dir.x);
            // One side pinned to the boundary direction; scan the other two.
            let n = 60;
            for i in 1..n {
                for j in 1..n {
                    let a1 = base + S::PI() * S::of_usize(i) / S::of_usize(n);
                    let a2 = base + S::PI() + S::PI() * S::of_usize(j) / S::of_usize(n);
                    if let Some(c) = supporting_triangle(&hull, [base, a1, a2]) {
                        consider(Some(c));
                    }
                }
            }
        }
        None => {
            let n = 90;
            for i in 0..n {
                let a0 = two_thirds_pi * S::of_usize(i) / S::of_usize(n);
                consider(supporting_triangle(
                    &hull,
                    [a0, a0 + two_thirds_pi, a0 + two_thirds_pi + two_thirds_pi],
                ));
            }
            for k in 0..hull.len() {
                let e = hull[(k + 1) % hull.len()] - hull[k];
                let a0 = e.y.atan2(e.x);
                consider(supporting_triangle(
                    &hull,
                    [a0, a0 + two_thirds_pi, a0 + two_thirds_pi + two_thirds_pi],
                ));
            }
        }
    }
    let (tri, _) = best?;
    Some(tri)
}

/// Inflates a triangle about its centroid by `1 + eps`.
pub fn inflate_triangle<S: Real>(tri: &[Pt<S>; 3], eps: S) -> [Pt<S>; 3] {
    let centroid = Pt::from((tri[0].coords + tri[1].coords + tri[2].coords) / S::of(3.0));
    let f = S::one() + eps;
    [
        centroid + (tri[0] - centroid) * f,
        centroid + (tri[1] - centroid) * f,
        centroid + (tri[2] - centroid) * f,
    ]
}

/// Barycenter of a triangle.
#[inline]
pub fn barycenter<S: Real>(a: &Pt<S>, b: &Pt<S>, c: &Pt<S>) -> Pt<S> {
    Pt::from((a.coords + b.coords + c.coords) / S::of(3.0))
}

/// Incenter of a triangle.
pub fn incenter<S: Real>(a: &Pt<S>, b: &Pt<S>, c: &Pt<S>) -> Pt<S> {
    let la = (c - b).norm();
    let lb = (a - c).norm();
    let lc = (b - a).norm();
    let s = la + lb + lc;
    Pt::from((a.coords * la + b.coords * lb + c.coords * lc) / s)
}
