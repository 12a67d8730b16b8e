//! Powell-Sabin 6-split of a triangulation: split-point selection with
//! validation, construction of the micro-triangulation, and detection of
//! triangles with symmetric configuration.

use crate::geometry::{barycenter, cross2, incenter, line_intersection, Pt};
use crate::mesh::Triangulation;
use crate::scalar::Real;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PsError {
    #[error(
        "no valid split-point configuration: edge ({0}, {1}) still violates the \
         intersection property with all adjacent interior points"
    )]
    SplitValidationFailed(usize, usize),
    #[error("split segment meets edge ({0}, {1}) too close to an endpoint")]
    DegenerateEdgePoint(usize, usize),
    #[error("class_r is not populated on the triangulation")]
    MissingClassification,
}

/// How triangle split points are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStrategy {
    /// Barycenters everywhere; triangles touching a coarse edge with a full
    /// side (r = 2) are demoted to their incenter only when a neighboring
    /// pair fails the edge-intersection property.
    PreferBarycenter,
    /// Incenters on all r = 2 triangles unconditionally.
    IncenterOnT2,
}

impl SplitStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            SplitStrategy::PreferBarycenter => "prefer-barycenter",
            SplitStrategy::IncenterOnT2 => "incenter-on-t2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Barycenter,
    Incenter,
}

/// One of the six micro-triangles of a split triangle. `verts` is CCW;
/// the corner/edge-point/split-point roles identify the vertices
/// independently of orientation.
#[derive(Debug, Clone, Copy)]
pub struct MicroTriangle {
    pub verts: [usize; 3],
    /// Micro-vertex id of the triangulation corner (equals the base vertex id).
    pub corner: usize,
    /// Micro-vertex id of the edge split point.
    pub edge_point: usize,
    /// Micro-vertex id of the triangle split point.
    pub split_point: usize,
    pub base_triangle: usize,
    pub base_edge: usize,
}

/// The Powell-Sabin refinement of a triangulation.
///
/// Micro-vertex ids: base vertices first, then one edge point per base edge,
/// then one split point per base triangle. Each base triangle contributes
/// six micro-triangles in a fixed order (corner/edge alternation around the
/// triangle), so all downstream indexing is reproducible.
#[derive(Debug, Clone)]
pub struct PsRefinement<S: Real> {
    pub base: Triangulation<S>,
    pub split_points: Vec<Pt<S>>,
    pub split_kinds: Vec<SplitKind>,
    pub edge_points: Vec<Pt<S>>,
    pub micro_vertices: Vec<Pt<S>>,
    pub micro_triangles: Vec<MicroTriangle>,
    /// Membership in the symmetric-configuration set.
    pub sym_flags: Vec<bool>,
}

/// Relative tolerance for symmetric-configuration detection.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Relative tolerance below which an edge point is considered degenerate.
const EDGE_POINT_TOL: f64 = 1e-10;

/// Chooses a split point inside every triangle such that, for each interior
/// edge, the segment between the two adjacent split points crosses the open
/// edge. Returns the points and their kinds.
pub fn choose_split_points<S: Real>(
    tri: &Triangulation<S>,
    strategy: SplitStrategy,
) -> Result<(Vec<Pt<S>>, Vec<SplitKind>), PsError> {
    if tri.class_r.len() != tri.triangles.len() {
        return Err(PsError::MissingClassification);
    }
    let centers: Vec<(Pt<S>, Pt<S>)> = tri
        .triangles
        .iter()
        .map(|&[a, b, c]| {
            let (pa, pb, pc) = (tri.vertices[a], tri.vertices[b], tri.vertices[c]);
            (barycenter(&pa, &pb, &pc), incenter(&pa, &pb, &pc))
        })
        .collect();
    let mut kinds: Vec<SplitKind> = match strategy {
        SplitStrategy::PreferBarycenter => vec![SplitKind::Barycenter; tri.triangles.len()],
        SplitStrategy::IncenterOnT2 => tri
            .class_r
            .iter()
            .map(|&r| {
                if r == 2 {
                    SplitKind::Incenter
                } else {
                    SplitKind::Barycenter
                }
            })
            .collect(),
    };
    let point = |kinds: &[SplitKind], k: usize| match kinds[k] {
        SplitKind::Barycenter => centers[k].0,
        SplitKind::Incenter => centers[k].1,
    };
    // Fixpoint loop: demote offending r=2 triangles to incenters, never
    // re-promote; terminates because demotion is monotone.
    loop {
        let mut demoted = false;
        let mut failure: Option<(usize, usize)> = None;
        for (e, adj) in tri.edge_triangles.iter().enumerate() {
            let (Some(k0), Some(k1)) = (adj[0], adj[1]) else {
                continue;
            };
            if split_segment_param(tri, e, &point(&kinds, k0), &point(&kinds, k1)).is_some() {
                continue;
            }
            let mut fixed = false;
            for k in [k0, k1] {
                if tri.class_r[k] == 2 && kinds[k] == SplitKind::Barycenter {
                    kinds[k] = SplitKind::Incenter;
                    fixed = true;
                }
            }
            if fixed {
                demoted = true;
            } else {
                failure = Some((tri.edges[e][0], tri.edges[e][1]));
            }
        }
        if !demoted {
            if let Some((a, b)) = failure {
                return Err(PsError::SplitValidationFailed(a, b));
            }
            break;
        }
    }
    let points = (0..tri.triangles.len())
        .map(|k| point(&kinds, k))
        .collect();
    Ok((points, kinds))
}

/// Parameter of the intersection of the segment between two split points
/// with the open edge `e`, or `None` when it misses the interior.
fn split_segment_param<S: Real>(
    tri: &Triangulation<S>,
    e: usize,
    c0: &Pt<S>,
    c1: &Pt<S>,
) -> Option<S> {
    let [a, b] = tri.edges[e];
    let (pa, pb) = (tri.vertices[a], tri.vertices[b]);
    let (s, t) = line_intersection(c0, c1, &pa, &pb)?;
    let tol = S::of(EDGE_POINT_TOL);
    if s <= S::zero() || s >= S::one() {
        return None;
    }
    if t <= tol || t >= S::one() - tol {
        return None;
    }
    Some(t)
}

/// Applies the 6-split: computes the edge split points (segment-edge
/// intersections on interior edges, midpoints on boundary edges) and builds
/// the global micro-triangle table.
pub fn ps6_split<S: Real>(
    tri: Triangulation<S>,
    split_points: Vec<Pt<S>>,
    split_kinds: Vec<SplitKind>,
) -> Result<PsRefinement<S>, PsError> {
    let n_v = tri.vertices.len();
    let n_e = tri.edges.len();
    let mut edge_points = Vec::with_capacity(n_e);
    for (e, &[a, b]) in tri.edges.iter().enumerate() {
        let (pa, pb) = (tri.vertices[a], tri.vertices[b]);
        let p = match tri.edge_triangles[e] {
            [Some(k0), Some(k1)] => {
                let t = split_segment_param(&tri, e, &split_points[k0], &split_points[k1])
                    .ok_or(PsError::DegenerateEdgePoint(a, b))?;
                Pt::from(pa.coords + (pb - pa) * t)
            }
            _ => Pt::from((pa.coords + pb.coords) / S::of(2.0)),
        };
        edge_points.push(p);
    }
    let mut micro_vertices = tri.vertices.clone();
    micro_vertices.extend(edge_points.iter().copied());
    micro_vertices.extend(split_points.iter().copied());
    let mut micro_triangles = Vec::with_capacity(6 * tri.triangles.len());
    for (k, t) in tri.triangles.iter().enumerate() {
        let split_id = n_v + n_e + k;
        // Canonical order around the triangle: corner, its leading edge
        // point, then the next corner with the same edge point, and so on.
        for local in 0..3 {
            let e = tri.triangle_edges[k][local];
            let edge_id = n_v + e;
            for &corner in &[t[local], t[(local + 1) % 3]] {
                let verts = orient_ccw(&micro_vertices, [corner, edge_id, split_id]);
                micro_triangles.push(MicroTriangle {
                    verts,
                    corner,
                    edge_point: edge_id,
                    split_point: split_id,
                    base_triangle: k,
                    base_edge: e,
                });
            }
        }
    }
    // Reorder: the spec order within a triangle is corner-major
    // (v1 e12, v2 e12, v2 e23, v3 e23, v3 e31, v1 e31), which is what the
    // loop above produces already.
    let n_t = tri.triangles.len();
    Ok(PsRefinement {
        base: tri,
        split_points,
        split_kinds,
        edge_points,
        micro_vertices,
        micro_triangles,
        sym_flags: vec![false; n_t],
    })
}

fn orient_ccw<S: Real>(vertices: &[Pt<S>], v: [usize; 3]) -> [usize; 3] {
    if cross2(&vertices[v[0]], &vertices[v[1]], &vertices[v[2]]) > S::zero() {
        v
    } else {
        [v[0], v[2], v[1]]
    }
}

/// Flags every triangle whose three neighbors exist and are its edge
/// reflections, and whose own and neighboring split points are barycenters
/// (coordinates checked within `tol` times the local edge length).
pub fn detect_symmetric<S: Real>(ps: &PsRefinement<S>, tol: S) -> Vec<bool> {
    let tri = &ps.base;
    let mut flags = vec![false; tri.triangles.len()];
    'tri: for (k, t) in tri.triangles.iter().enumerate() {
        for local in 0..3 {
            let Some(nb) = tri.triangle_neighbors[k][local] else {
                continue 'tri;
            };
            let (a, b) = (t[local], t[(local + 1) % 3]);
            let c = t[(local + 2) % 3];
            let scale = (tri.vertices[b] - tri.vertices[a]).norm() * tol;
            // The neighbor's third vertex must be the reflection a + b - c.
            let reflected = Pt::from(
                tri.vertices[a].coords + tri.vertices[b].coords - tri.vertices[c].coords,
            );
            let third = tri.triangles[nb]
                .iter()
                .copied()
                .find(|v| *v != a && *v != b)
                .expect("neighbor shares exactly two vertices");
            if (tri.vertices[third] - reflected).norm() > scale {
                continue 'tri;
            }
            if !is_barycentric_split(ps, nb, tol) {
                continue 'tri;
            }
        }
        if !is_barycentric_split(ps, k, tol) {
            continue 'tri;
        }
        flags[k] = true;
    }
    flags
}

fn is_barycentric_split<S: Real>(ps: &PsRefinement<S>, k: usize, tol: S) -> bool {
    if ps.split_kinds[k] != SplitKind::Barycenter {
        return false;
    }
    let [a, b, c] = ps.base.triangles[k];
    let bc = barycenter(
        &ps.base.vertices[a],
        &ps.base.vertices[b],
        &ps.base.vertices[c],
    );
    let scale = (ps.base.vertices[b] - ps.base.vertices[a]).norm() * tol;
    (ps.split_points[k] - bc).norm() <= scale
}

impl<S: Real> PsRefinement<S> {
    /// Runs the full pipeline: split-point choice, 6-split, and symmetric
    /// configuration detection with the default tolerance.
    pub fn build(tri: Triangulation<S>, strategy: SplitStrategy) -> Result<Self, PsError> {
        let (points, kinds) = choose_split_points(&tri, strategy)?;
        let mut ps = ps6_split(tri, points, kinds)?;
        ps.sym_flags = detect_symmetric(&ps, S::of(SYMMETRY_TOL));
        Ok(ps)
    }

    pub fn n_sym(&self) -> usize {
        self.sym_flags.iter().filter(|&&f| f).count()
    }

    /// Corner points of a micro-triangle.
    pub fn micro_corners(&self, m: usize) -> [Pt<S>; 3] {
        let v = self.micro_triangles[m].verts;
        [
            self.micro_vertices[v[0]],
            self.micro_vertices[v[1]],
            self.micro_vertices[v[2]],
        ]
    }

    /// The six micro-triangle ids of base triangle `k`.
    #[inline]
    pub fn micro_of_base(&self, k: usize) -> std::ops::Range<usize> {
        6 * k..6 * (k + 1)
    }

    /// The micro-triangle of base triangle `k` whose corner is base vertex
    /// `v` and whose edge point belongs to base edge `e`.
    pub fn micro_by_roles(&self, k: usize, v: usize, e: usize) -> Option<usize> {
        self.micro_of_base(k).find(|&m| {
            let mt = &self.micro_triangles[m];
            mt.corner == v && mt.base_edge == e
        })
    }

    /// Debug dump: the micro-triangulation as mesh JSON extended with one
    /// split-kind entry per base triangle.
    pub fn dump_json(&self) -> serde_json::Value {
        serde_json::json!({
            "vertices": self
                .micro_vertices
                .iter()
                .map(|p| [p.x.to_f64_lossy(), p.y.to_f64_lossy()])
                .collect::<Vec<_>>(),
            "triangles": self
                .micro_triangles
                .iter()
                .map(|m| m.verts)
                .collect::<Vec<_>>(),
            "kinds": self.split_kinds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Triangulation;
    use approx::assert_relative_eq;

    fn single_triangle() -> Triangulation<f64> {
        Triangulation::from_parts(
            vec![Pt::new(0.0, 0.0), Pt::new(1.0, 0.0), Pt::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_six_split() {
        let ps = PsRefinement::build(single_triangle(), SplitStrategy::PreferBarycenter).unwrap();
        assert_eq!(ps.micro_vertices.len(), 7);
        assert_eq!(ps.micro_triangles.len(), 6);
        // Boundary edge points are midpoints.
        for (e, &[a, b]) in ps.base.edges.iter().enumerate() {
            let mid = Pt::from((ps.base.vertices[a].coords + ps.base.vertices[b].coords) / 2.0);
            assert_relative_eq!((ps.edge_points[e] - mid).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn micro_areas_partition_macro_area() {
        let tri = Triangulation::<f64>::from_parts(
            vec![
                Pt::new(0.0, 0.0),
                Pt::new(1.3, 0.1),
                Pt::new(0.9, 1.2),
                Pt::new(-0.4, 0.9),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let macro_area: f64 = tri
            .triangles
            .iter()
            .map(|&[a, b, c]| {
                crate::geometry::signed_area(&tri.vertices[a], &tri.vertices[b], &tri.vertices[c])
            })
            .sum();
        let ps = PsRefinement::build(tri, SplitStrategy::PreferBarycenter).unwrap();
        let micro_area: f64 = (0..ps.micro_triangles.len())
            .map(|m| {
                let c = ps.micro_corners(m);
                crate::geometry::signed_area(&c[0], &c[1], &c[2])
            })
            .sum();
        assert_relative_eq!(micro_area, macro_area, epsilon = 1e-14 * macro_area);
    }

    #[test]
    fn shared_edge_point_is_segment_intersection() {
        // Two triangles of the unit square: centroids (1/3,1/3) and
        // (2/3,2/3); their segment crosses the diagonal at (1/2,1/2).
        let tri = Triangulation::<f64>::from_parts(
            vec![
                Pt::new(0.0, 0.0),
                Pt::new(1.0, 0.0),
                Pt::new(1.0, 1.0),
                Pt::new(0.0, 1.0),
            ],
            vec![[0, 1, 3], [1, 2, 3]],
        )
        .unwrap();
        let ps = PsRefinement::build(tri, SplitStrategy::PreferBarycenter).unwrap();
        let e = ps
            .base
            .edges
            .iter()
            .position(|&[a, b]| (a, b) == (1, 3))
            .unwrap();
        assert!(!ps.base.edge_boundary[e]);
        assert_relative_eq!(ps.edge_points[e].x, 0.5, epsilon = 1e-14);
        assert_relative_eq!(ps.edge_points[e].y, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn level_four_all_barycenters_validate() {
        let refined = single_triangle().uniform_refine(4).unwrap();
        let (_, kinds) = choose_split_points(&refined, SplitStrategy::PreferBarycenter).unwrap();
        assert!(kinds.iter().all(|&k| k == SplitKind::Barycenter));
    }

    #[test]
    fn sliver_pair_triggers_demotion() {
        // A very obtuse pair: the barycenter-barycenter segment misses the
        // open shared edge, so the r=2 triangles must fall back to incenters.
        let tri = Triangulation::<f64>::from_parts(
            vec![
                Pt::new(0.0, 0.0),
                Pt::new(1.0, 0.0),
                Pt::new(4.0, 0.03),
                Pt::new(4.1, -0.02),
            ],
            vec![[0, 1, 2], [0, 3, 1]],
        )
        .unwrap();
        let (points, kinds) = choose_split_points(&tri, SplitStrategy::PreferBarycenter).unwrap();
        assert!(
            kinds.iter().any(|&k| k == SplitKind::Incenter),
            "expected at least one demotion, got {kinds:?}"
        );
        // The final configuration validates.
        let ps = ps6_split(tri, points, kinds).unwrap();
        assert_eq!(ps.micro_triangles.len(), 12);
    }

    #[test]
    fn symmetric_counts_single_triangle_level_four() {
        let refined = single_triangle().uniform_refine(4).unwrap();
        let ps =
            PsRefinement::build(refined.clone(), SplitStrategy::PreferBarycenter).unwrap();
        assert_eq!(ps.n_sym(), 7); // l^2 - 3(l-1)
        let ps2 = PsRefinement::build(refined, SplitStrategy::IncenterOnT2).unwrap();
        assert_eq!(ps2.n_sym(), 1); // (l-3)^2
    }

    #[test]
    fn no_symmetric_triangles_at_low_levels_with_incenters() {
        for level in 1..=2 {
            let refined = single_triangle().uniform_refine(level).unwrap();
            let ps = PsRefinement::build(refined, SplitStrategy::IncenterOnT2).unwrap();
            assert_eq!(ps.n_sym(), 0);
        }
    }

    #[test]
    fn symmetric_detection_is_rigid_motion_invariant() {
        let refined = single_triangle().uniform_refine(5).unwrap();
        let base = PsRefinement::build(refined, SplitStrategy::PreferBarycenter).unwrap();
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let moved = Triangulation::<f64>::from_parts(
            single_triangle()
                .vertices
                .iter()
                .map(|p| Pt::new(3.0 * (c * p.x - s * p.y) + 7.0, 3.0 * (s * p.x + c * p.y) - 2.0))
                .collect(),
            single_triangle().triangles.clone(),
        )
        .unwrap()
        .uniform_refine(5)
        .unwrap();
        let ps2 = PsRefinement::build(moved, SplitStrategy::PreferBarycenter).unwrap();
        assert_eq!(base.sym_flags, ps2.sym_flags);
    }

    #[test]
    fn micro_triangles_are_ccw_with_role_tags() {
        let refined = single_triangle().uniform_refine(2).unwrap();
        let ps = PsRefinement::build(refined, SplitStrategy::PreferBarycenter).unwrap();
        for (m, mt) in ps.micro_triangles.iter().enumerate() {
            let c = ps.micro_corners(m);
            assert!(cross2(&c[0], &c[1], &c[2]) > 0.0, "micro {m} not CCW");
            let mut roles = [mt.corner, mt.edge_point, mt.split_point];
            roles.sort_unstable();
            let mut verts = mt.verts;
            verts.sort_unstable();
            assert_eq!(roles, verts);
        }
    }
}
