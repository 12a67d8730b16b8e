//! Construction of the C1 cubic B-spline basis over a Powell-Sabin
//! refinement: three functions per vertex (normalized through a Greville
//! triangle) and four per edge (indexed by vertex/edge/triangle triplets).
//!
//! Each basis function is the unique C1 cubic spline on its support star
//! that interpolates a delta across the blossom-type degrees of freedom of
//! the space. The functions are computed by local constrained least-squares
//! solves on the Bernstein coefficients of the star; super-smoothness of
//! the vertex functions (C2 at split points, across edge-point/split-point
//! edges, and inside symmetric triangles) is imposed explicitly.

use crate::bb::{mi_index, multi_indices, probe_row, BBPatch};
use crate::geometry::{barycentric, cross2, enclosing_triangle, inflate_triangle, Pt, Vec2};
use crate::psrefine::PsRefinement;
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("Greville triangle of vertex {0} is degenerate")]
    GrevilleDegenerate(usize),
    #[error("local system for {target} is underdetermined (rank {rank} of {cols})")]
    Underdetermined {
        target: String,
        rank: usize,
        cols: usize,
    },
    #[error("local system for {target} is inconsistent (residual {residual})")]
    Inconsistent { target: String, residual: f64 },
    #[error("constructed function for {target} violates nonnegativity ({min})")]
    Negative { target: String, min: f64 },
    #[error("mesh too large for the dimension oracle ({0} micro-triangles, limit 120)")]
    OracleMeshTooLarge(usize),
    #[error(
        "dimension oracle rank is ambiguous: singular value {value} near threshold {threshold}"
    )]
    OracleAmbiguousRank { value: f64, threshold: f64 },
}

/// Sparse spline in Bernstein form: micro-triangle id -> 10 coefficients.
#[derive(Debug, Clone)]
pub struct SplineFunction<S: Real> {
    pub patches: BTreeMap<usize, [S; 10]>,
}

impl<S: Real> Default for SplineFunction<S> {
    fn default() -> Self {
        Self {
            patches: BTreeMap::new(),
        }
    }
}

impl<S: Real> SplineFunction<S> {
    pub fn patch(&self, ps: &PsRefinement<S>, micro: usize) -> Option<BBPatch<S>> {
        self.patches
            .get(&micro)
            .map(|c| BBPatch::cubic(ps.micro_corners(micro), *c))
    }

    /// Adds `weight * other` patchwise.
    pub fn accumulate(&mut self, other: &SplineFunction<S>, weight: S) {
        for (&m, coeffs) in &other.patches {
            let entry = self.patches.entry(m).or_insert([S::zero(); 10]);
            for (dst, src) in entry.iter_mut().zip(coeffs) {
                *dst += weight * *src;
            }
        }
    }

    pub fn max_abs_coeff(&self) -> S {
        self.patches
            .values()
            .flatten()
            .fold(S::zero(), |m, c| m.max(c.abs()))
    }

    pub fn min_coeff(&self) -> S {
        self.patches
            .values()
            .flatten()
            .fold(S::zero(), |m, c| m.min(*c))
    }

    /// Evaluates at `p` given the containing micro-triangle.
    pub fn eval_in(&self, ps: &PsRefinement<S>, micro: usize, p: &Pt<S>) -> S {
        match self.patch(ps, micro) {
            Some(patch) => patch.eval(p),
            None => S::zero(),
        }
    }
}

impl<S: Real> PsRefinement<S> {
    /// Micro-triangle containing `p`, by brute-force scan (used for
    /// sampling and dumps; assembly never needs point location).
    pub fn locate_micro(&self, p: &Pt<S>) -> Option<usize> {
        let tol = S::of(-1e-12);
        for m in 0..self.micro_triangles.len() {
            let c = self.micro_corners(m);
            let l = barycentric(&c, p);
            if l.iter().all(|&v| v >= tol) {
                return Some(m);
            }
        }
        None
    }
}

/// Triangle containing a vertex's Greville points; its affine barycentric
/// coordinate functions normalize the three vertex basis functions.
#[derive(Debug, Clone)]
pub struct GrevilleTriangle<S: Real> {
    pub vertex: usize,
    pub corners: [Pt<S>; 3],
}

impl<S: Real> GrevilleTriangle<S> {
    /// Barycentric coordinate `a` of the triangle evaluated at `p`.
    pub fn coordinate(&self, a: usize, p: &Pt<S>) -> S {
        barycentric(&self.corners, p)[a]
    }
}

/// Greville point set of a vertex: the vertex itself plus the points
/// two-thirds towards it from each incident edge split point and each
/// incident triangle split point.
pub fn greville_points<S: Real>(ps: &PsRefinement<S>, v: usize) -> Vec<Pt<S>> {
    let tri = &ps.base;
    let pv = tri.vertices[v];
    let mut pts = vec![pv];
    let third = S::of(1.0 / 3.0);
    let two_thirds = S::of(2.0 / 3.0);
    for (e, &[a, b]) in tri.edges.iter().enumerate() {
        if a == v || b == v {
            pts.push(Pt::from(
                pv.coords * two_thirds + ps.edge_points[e].coords * third,
            ));
        }
    }
    for (k, t) in tri.triangles.iter().enumerate() {
        if t.contains(&v) {
            pts.push(Pt::from(
                pv.coords * two_thirds + ps.split_points[k].coords * third,
            ));
        }
    }
    pts
}

/// Builds the Greville triangle of a vertex: a near-minimal-area enclosing
/// triangle of the Greville points, inflated slightly for strict
/// containment. For a boundary vertex whose boundary edges are collinear,
/// one side is aligned with the boundary line.
pub fn greville_triangle<S: Real>(
    ps: &PsRefinement<S>,
    v: usize,
    points: &[Pt<S>],
) -> Result<GrevilleTriangle<S>, BasisError> {
    let tri = &ps.base;
    let pv = tri.vertices[v];
    let mut boundary_dirs: Vec<Vec2<S>> = Vec::new();
    for (e, &[a, b]) in tri.edges.iter().enumerate() {
        if tri.edge_boundary[e] && (a == v || b == v) {
            let other = if a == v { b } else { a };
            boundary_dirs.push(tri.vertices[other] - pv);
        }
    }
    let fixed_dir = match boundary_dirs.as_slice() {
        [d1, d2] => {
            let cr = d1.x * d2.y - d1.y * d2.x;
            if cr.abs() <= S::of(1e-12) * d1.norm() * d2.norm() {
                // Collinear boundary: align one side with it, interior on
                // the left of the chosen direction.
                let mut dir = *d1;
                let k = tri
                    .triangles
                    .iter()
                    .position(|t| t.contains(&v))
                    .expect("vertex belongs to a triangle");
                let interior = ps.split_points[k] - pv;
                if dir.x * interior.y - dir.y * interior.x < S::zero() {
                    dir = -dir;
                }
                Some(dir)
            } else {
                None
            }
        }
        _ => None,
    };
    let tri_pts =
        enclosing_triangle(points, fixed_dir).ok_or(BasisError::GrevilleDegenerate(v))?;
    // Strict containment needs a little inflation. With a boundary-aligned
    // side the scaling center must lie on that side, otherwise the side
    // would drift off the boundary line and the aligned coordinate would
    // lose its exact zero trace.
    let corners = match fixed_dir {
        None => inflate_triangle(&tri_pts, S::of(1e-9)),
        Some(dir) => {
            let on_side = |a: &Pt<S>, b: &Pt<S>| {
                let e = *b - *a;
                (e.x * dir.y - e.y * dir.x).abs() <= S::of(1e-9) * e.norm() * dir.norm()
            };
            let side = (0..3)
                .find(|&k| on_side(&tri_pts[k], &tri_pts[(k + 1) % 3]))
                .unwrap_or(0);
            let mid = Pt::from(
                (tri_pts[side].coords + tri_pts[(side + 1) % 3].coords) / S::of(2.0),
            );
            let f = S::one() + S::of(1e-9);
            [
                Pt::from(mid.coords + (tri_pts[0] - mid) * f),
                Pt::from(mid.coords + (tri_pts[1] - mid) * f),
                Pt::from(mid.coords + (tri_pts[2] - mid) * f),
            ]
        }
    };
    let area2 = cross2(&corners[0], &corners[1], &corners[2]);
    let scale = points
        .iter()
        .map(|p| (p - pv).norm())
        .fold(S::zero(), |m, d| m.max(d));
    if area2.abs() <= S::of(1e-12) * scale * scale {
        return Err(BasisError::GrevilleDegenerate(v));
    }
    Ok(GrevilleTriangle {
        vertex: v,
        corners,
    })
}

/// One entry of the edge-function index set: `(vertex, edge, triangle)`
/// where the triangle is `None` on the outer side of a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Xi0Triplet {
    pub vertex: usize,
    pub edge: usize,
    pub triangle: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionKind {
    /// `local` in 0..3 selects the Greville-triangle coordinate.
    Vertex { vertex: usize, local: usize },
    /// Index into the xi0 triplet list.
    Edge { xi0: usize },
}

#[derive(Debug, Clone)]
pub struct BasisFunction<S: Real> {
    pub kind: FunctionKind,
    pub spline: SplineFunction<S>,
}

/// Boundary behavior of a basis function, determined by inspecting its own
/// Bernstein coefficients along boundary micro-edges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BoundaryClass {
    pub zero_trace: bool,
    pub zero_normal_deriv: bool,
}

/// The full B-spline basis of the C1 cubic space over a Powell-Sabin
/// refinement: `3 n_v` vertex functions followed by `4 n_e` edge functions
/// in xi0 order.
#[derive(Debug)]
pub struct SplineBasis<S: Real> {
    pub ps: PsRefinement<S>,
    pub greville: Vec<GrevilleTriangle<S>>,
    pub xi0: Vec<Xi0Triplet>,
    pub functions: Vec<BasisFunction<S>>,
    pub boundary_class: Vec<BoundaryClass>,
}

impl<S: Real> SplineBasis<S> {
    pub fn num_vertex_functions(&self) -> usize {
        3 * self.ps.base.vertices.len()
    }

    pub fn num_edge_functions(&self) -> usize {
        self.xi0.len()
    }

    pub fn dim(&self) -> usize {
        self.functions.len()
    }

    pub fn xi0_index(&self, triplet: &Xi0Triplet) -> Option<usize> {
        self.xi0.iter().position(|t| t == triplet)
    }

    /// Sum of `coeffs[i] * B_i` as a sparse spline.
    pub fn combine(&self, coeffs: &DVector<S>) -> SplineFunction<S> {
        assert_eq!(coeffs.len(), self.functions.len());
        let mut out = SplineFunction::default();
        for (f, c) in self.functions.iter().zip(coeffs.iter()) {
            if *c != S::zero() {
                out.accumulate(&f.spline, *c);
            }
        }
        out
    }
}

/// Canonical xi0 ordering: by edge index, then triangle index with the
/// boundary marker last, then vertex index.
pub fn build_xi0<S: Real>(ps: &PsRefinement<S>) -> Vec<Xi0Triplet> {
    let tri = &ps.base;
    let mut out = Vec::with_capacity(4 * tri.edges.len());
    for (e, &[lo, hi]) in tri.edges.iter().enumerate() {
        let mut sides: Vec<Option<usize>> = tri.edge_triangles[e]
            .iter()
            .copied()
            .filter(|t| t.is_some())
            .collect();
        if tri.edge_boundary[e] {
            sides.push(None);
        }
        sides.sort_by_key(|t| t.map_or(usize::MAX, |k| k));
        for t in sides {
            for v in [lo, hi] {
                out.push(Xi0Triplet {
                    vertex: v,
                    edge: e,
                    triangle: t,
                });
            }
        }
    }
    out
}

/// The blossom arguments of the degree of freedom attached to a triplet,
/// and its carrier micro-triangle. With the Greville parameters fixed at
/// one half, the second argument is the opposite edge endpoint; the third
/// argument is the triangle split point (or the edge split point on the
/// outer side of a boundary edge).
pub fn dof_args<S: Real>(ps: &PsRefinement<S>, triplet: &Xi0Triplet) -> ([Pt<S>; 3], usize) {
    let tri = &ps.base;
    let [a, b] = tri.edges[triplet.edge];
    let other = if triplet.vertex == a { b } else { a };
    let pv = tri.vertices[triplet.vertex];
    let po = tri.vertices[other];
    let side = triplet
        .triangle
        .or(tri.edge_triangles[triplet.edge][0])
        .expect("edge has at least one triangle");
    let carrier = ps
        .micro_by_roles(side, triplet.vertex, triplet.edge)
        .expect("carrier micro-triangle exists");
    let third = match triplet.triangle {
        Some(k) => ps.split_points[k],
        None => ps.edge_points[triplet.edge],
    };
    ([pv, po, third], carrier)
}

// ---------------------------------------------------------------------------
// Local complexes and constraint assembly
// ---------------------------------------------------------------------------

/// Sub-complex of the micro-triangulation with shared Bernstein domain
/// points as unknown columns.
struct LocalComplex<S: Real> {
    micro: Vec<usize>,
    corners: Vec<[Pt<S>; 3]>,
    verts: Vec<[usize; 3]>,
    ncols: usize,
    /// Column of each Bernstein coefficient, per local triangle.
    cols: Vec<[usize; 10]>,
    edges: Vec<LocalEdge>,
}

struct LocalEdge {
    u: usize,
    v: usize,
    tris: Vec<usize>,
    on_domain_boundary: bool,
}

fn multiset_key(verts: &[usize; 3], mi: [usize; 3]) -> [usize; 3] {
    let mut key = [0usize; 3];
    let mut pos = 0;
    for (c, &count) in mi.iter().enumerate() {
        for _ in 0..count {
            key[pos] = verts[c];
            pos += 1;
        }
    }
    key.sort_unstable();
    key
}

impl<S: Real> LocalComplex<S> {
    fn build(ps: &PsRefinement<S>, micro_ids: Vec<usize>) -> Self {
        let n_v = ps.base.vertices.len();
        let mis = multi_indices(3);
        let mut dpoint_of: BTreeMap<[usize; 3], usize> = BTreeMap::new();
        let mut cols = Vec::with_capacity(micro_ids.len());
        let mut corners = Vec::with_capacity(micro_ids.len());
        let mut verts = Vec::with_capacity(micro_ids.len());
        let mut edge_map: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
        for (local, &m) in micro_ids.iter().enumerate() {
            let mt = &ps.micro_triangles[m];
            let mut tri_cols = [0usize; 10];
            for (pos, &mi) in mis.iter().enumerate() {
                let key = multiset_key(&mt.verts, mi);
                let next = dpoint_of.len();
                tri_cols[pos] = *dpoint_of.entry(key).or_insert(next);
            }
            cols.push(tri_cols);
            corners.push(ps.micro_corners(m));
            verts.push(mt.verts);
            for k in 0..3 {
                let (a, b) = (mt.verts[k], mt.verts[(k + 1) % 3]);
                let key = if a < b { [a, b] } else { [b, a] };
                edge_map.entry(key).or_default().push(local);
            }
        }
        let edges = edge_map
            .into_iter()
            .map(|([u, v], tris)| {
                // A micro-edge lies on the domain boundary iff it is half of
                // a boundary base edge: one endpoint a base vertex, the
                // other that edge's split point.
                let on_domain_boundary = u < n_v
                    && v >= n_v
                    && v < n_v + ps.base.edges.len()
                    && ps.base.edge_boundary[v - n_v]
                    && ps.base.edges[v - n_v].contains(&u);
                LocalEdge {
                    u,
                    v,
                    tris,
                    on_domain_boundary,
                }
            })
            .collect();
        Self {
            micro: micro_ids,
            corners,
            verts,
            ncols: dpoint_of.len(),
            cols,
            edges,
        }
    }

    fn dpoint_col(&self, local: usize, mi: [usize; 3]) -> usize {
        self.cols[local][mi_index(mi[0], mi[1], mi[2])]
    }
}

type Row<S> = (Vec<(usize, S)>, S);

struct RowSet<S: Real> {
    rows: Vec<Row<S>>,
    /// Deduplication of single-coefficient zero rows.
    pinned: BTreeSet<usize>,
}

impl<S: Real> RowSet<S> {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            pinned: BTreeSet::new(),
        }
    }

    fn push(&mut self, entries: Vec<(usize, S)>, rhs: S) -> usize {
        self.rows.push((entries, rhs));
        self.rows.len() - 1
    }

    fn pin(&mut self, col: usize) -> Option<usize> {
        self.pinned
            .insert(col)
            .then(|| self.push(vec![(col, S::one())], S::zero()))
    }
}

/// Row of the functional `patch -> D_n^order patch(x)` over the 10
/// coefficients of the patch on `corners`, where `n` is the unit left
/// normal of `p -> q` and `x = p + t (q - p)`.
fn normal_deriv_entries<S: Real>(
    corners: &[Pt<S>; 3],
    p: &Pt<S>,
    q: &Pt<S>,
    order: usize,
    t: S,
) -> [S; 10] {
    let d = q - p;
    let n = Vec2::new(-d.y, d.x) / d.norm();
    let x = Pt::from(p.coords + d * t);
    probe_row(corners, |patch| {
        let mut cur = patch.clone();
        for _ in 0..order {
            cur = cur.derivative_dir(&n);
        }
        cur.eval(&x)
    })
}

/// Emits `D_n^order` jump rows between the two triangles of an interior
/// local edge, at the given edge parameters.
fn emit_jump_rows<S: Real>(
    rows: &mut RowSet<S>,
    lc: &LocalComplex<S>,
    ps: &PsRefinement<S>,
    edge: &LocalEdge,
    order: usize,
    params: &[S],
) {
    let (a, b) = (edge.tris[0], edge.tris[1]);
    let pu = ps.micro_vertices[edge.u];
    let pv = ps.micro_vertices[edge.v];
    for &t in params {
        let ra = normal_deriv_entries(&lc.corners[a], &pu, &pv, order, t);
        let rb = normal_deriv_entries(&lc.corners[b], &pu, &pv, order, t);
        let mut entries = Vec::with_capacity(20);
        for (pos, &val) in ra.iter().enumerate() {
            entries.push((lc.cols[a][pos], val));
        }
        for (pos, &val) in rb.iter().enumerate() {
            entries.push((lc.cols[b][pos], -val));
        }
        rows.push(entries, S::zero());
    }
}

/// Emits zero-trace and zero-cross-derivative rows on a support-boundary
/// edge, so the spline extends by zero across it with C1 continuity.
fn emit_zero_edge_rows<S: Real>(
    rows: &mut RowSet<S>,
    lc: &LocalComplex<S>,
    ps: &PsRefinement<S>,
    edge: &LocalEdge,
) {
    let local = edge.tris[0];
    let cu = lc.verts[local]
        .iter()
        .position(|&x| x == edge.u)
        .expect("edge endpoint in triangle");
    let cv = lc.verts[local]
        .iter()
        .position(|&x| x == edge.v)
        .expect("edge endpoint in triangle");
    // Trace coefficients: multi-indices supported on the edge corners.
    for mi in multi_indices(3) {
        let off_edge: usize = (0..3)
            .filter(|&c| c != cu && c != cv)
            .map(|c| mi[c])
            .sum();
        if off_edge == 0 {
            rows.pin(lc.dpoint_col(local, mi));
        }
    }
    let pu = ps.micro_vertices[edge.u];
    let pv = ps.micro_vertices[edge.v];
    for t in [S::zero(), S::of(0.5), S::one()] {
        let r = normal_deriv_entries(&lc.corners[local], &pu, &pv, 1, t);
        let entries = r
            .iter()
            .enumerate()
            .map(|(pos, &val)| (lc.cols[local][pos], val))
            .collect();
        rows.push(entries, S::zero());
    }
}

/// Pins the corner and first-ring coefficients around micro-vertex `v`.
/// With `affine` given, the coefficient at the ring point towards `w` is
/// the affine Greville coordinate evaluated at `(2 v + w) / 3` (these rows
/// carry per-function right-hand sides, recorded in `rhs_rows`); otherwise
/// the coefficients are pinned to zero.
fn emit_ring_rows<S: Real>(
    rows: &mut RowSet<S>,
    lc: &LocalComplex<S>,
    ps: &PsRefinement<S>,
    v: usize,
    affine: Option<&GrevilleTriangle<S>>,
    rhs_rows: &mut Vec<(usize, [S; 3])>,
) {
    let pv = ps.micro_vertices[v];
    let mut pin_value = |col: usize, point: Pt<S>, rows: &mut RowSet<S>| match affine {
        Some(q) => {
            if let Some(row) = rows.pin(col) {
                let vals = std::array::from_fn(|a| q.coordinate(a, &point));
                rhs_rows.push((row, vals));
            }
        }
        None => {
            rows.pin(col);
        }
    };
    for (local, verts) in lc.verts.iter().enumerate() {
        let Some(cpos) = verts.iter().position(|&x| x == v) else {
            continue;
        };
        for (pos, mi) in multi_indices(3).into_iter().enumerate() {
            if mi[cpos] == 3 {
                pin_value(lc.cols[local][pos], pv, rows);
            } else if mi[cpos] == 2 {
                let wpos = (0..3).find(|&c| c != cpos && mi[c] == 1).unwrap();
                let pw = ps.micro_vertices[verts[wpos]];
                let point = Pt::from((pv.coords * S::of(2.0) + pw.coords) / S::of(3.0));
                pin_value(lc.cols[local][pos], point, rows);
            }
        }
    }
}

/// Emits the blossom degree-of-freedom row of a triplet whose carrier lies
/// in the complex; returns the row index.
fn emit_dof_row<S: Real>(
    rows: &mut RowSet<S>,
    lc: &LocalComplex<S>,
    ps: &PsRefinement<S>,
    triplet: &Xi0Triplet,
) -> usize {
    let (args, carrier) = dof_args(ps, triplet);
    let local = lc
        .micro
        .iter()
        .position(|&m| m == carrier)
        .expect("carrier inside complex");
    let r = probe_row(&lc.corners[local], |patch| patch.blossom(&args));
    let entries = r
        .iter()
        .enumerate()
        .map(|(pos, &val)| (lc.cols[local][pos], val))
        .collect();
    rows.push(entries, S::zero())
}

/// Solves the equilibrated least-squares system for several right-hand
/// sides and verifies uniqueness and consistency.
fn solve_local<S: Real>(
    rows: &RowSet<S>,
    rhs_overrides: &[Vec<(usize, S)>],
    ncols: usize,
    target: &str,
) -> Result<Vec<DVector<S>>, BasisError> {
    let nrows = rows.rows.len();
    let nrhs = rhs_overrides.len();
    let mut a = DMatrix::<S>::zeros(nrows, ncols);
    let mut b = DMatrix::<S>::zeros(nrows, nrhs);
    for (r, (entries, rhs)) in rows.rows.iter().enumerate() {
        for &(c, v) in entries {
            a[(r, c)] += v;
        }
        for col in 0..nrhs {
            b[(r, col)] = *rhs;
        }
    }
    for (col, overrides) in rhs_overrides.iter().enumerate() {
        for &(r, v) in overrides {
            b[(r, col)] = v;
        }
    }
    // Row equilibration keeps one rank tolerance meaningful across
    // constraint types with different physical scales.
    for r in 0..nrows {
        let mut m = S::zero();
        for c in 0..ncols {
            m = m.max(a[(r, c)].abs());
        }
        if m > S::zero() {
            let inv = S::one() / m;
            for c in 0..ncols {
                a[(r, c)] *= inv;
            }
            for col in 0..nrhs {
                b[(r, col)] *= inv;
            }
        }
    }
    let eps = S::default_epsilon().sqrt();
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    // Uniqueness screen on the R diagonal; a singular system always shows a
    // tiny diagonal entry there. Ambiguous cases are settled by singular
    // values (rare, so the expensive decomposition stays off the hot path).
    let rdiag: Vec<S> = (0..ncols).map(|i| r[(i, i)].abs()).collect();
    let rmax = rdiag.iter().fold(S::zero(), |m, &v| m.max(v));
    if rdiag.iter().any(|&v| v <= rmax * eps) {
        let svd = a.clone().svd(false, false);
        let smax = svd
            .singular_values
            .iter()
            .fold(S::zero(), |m, &s| m.max(s));
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > smax * eps)
            .count();
        if rank < ncols {
            return Err(BasisError::Underdetermined {
                target: target.to_string(),
                rank,
                cols: ncols,
            });
        }
    }
    let solve_ls = |rhs: &DMatrix<S>| -> Option<DMatrix<S>> {
        let qtb = q.transpose() * rhs;
        r.solve_upper_triangular(&qtb)
    };
    let mut x = solve_ls(&b).ok_or_else(|| BasisError::Underdetermined {
        target: target.to_string(),
        rank: ncols.saturating_sub(1),
        cols: ncols,
    })?;
    // One step of least-squares iterative refinement.
    if let Some(dx) = solve_ls(&(&b - &a * &x)) {
        x += dx;
    }
    let resid = (&a * &x - &b).abs().max();
    if resid > S::of(100.0) * eps {
        return Err(BasisError::Inconsistent {
            target: target.to_string(),
            residual: resid.to_f64_lossy(),
        });
    }
    Ok((0..nrhs).map(|c| x.column(c).into_owned()).collect())
}

fn split_point_base<S: Real>(ps: &PsRefinement<S>, id: usize) -> Option<usize> {
    let base = ps.base.vertices.len() + ps.base.edges.len();
    (id >= base).then(|| id - base)
}

fn is_edge_point<S: Real>(ps: &PsRefinement<S>, id: usize) -> bool {
    let n_v = ps.base.vertices.len();
    id >= n_v && id < n_v + ps.base.edges.len()
}

/// All xi0 indices whose carrier micro-triangle lies within the given base
/// triangles.
fn dofs_with_carrier_in<S: Real>(
    ps: &PsRefinement<S>,
    xi0: &[Xi0Triplet],
    base_tris: &BTreeSet<usize>,
) -> Vec<usize> {
    xi0.iter()
        .enumerate()
        .filter(|(_, t)| {
            let side = t
                .triangle
                .or(ps.base.edge_triangles[t.edge][0])
                .expect("edge side");
            base_tris.contains(&side)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Smoothness constraints shared by all solves on a complex. `super_smooth`
/// adds the C2 conditions carried by the vertex functions.
fn emit_smoothness_rows<S: Real>(
    rows: &mut RowSet<S>,
    lc: &LocalComplex<S>,
    ps: &PsRefinement<S>,
    super_smooth: bool,
) {
    let c1_params = [S::zero(), S::of(0.5), S::one()];
    let c2_params = [S::zero(), S::one()];
    for edge in &lc.edges {
        match edge.tris.len() {
            2 => {
                emit_jump_rows(rows, lc, ps, edge, 1, &c1_params);
                if super_smooth {
                    let split_u = split_point_base(ps, edge.u);
                    let split_v = split_point_base(ps, edge.v);
                    let ep_to_split = (is_edge_point(ps, edge.u) && split_v.is_some())
                        || (is_edge_point(ps, edge.v) && split_u.is_some());
                    let in_sym = split_u
                        .or(split_v)
                        .is_some_and(|k| ps.sym_flags[k]);
                    if ep_to_split || in_sym {
                        emit_jump_rows(rows, lc, ps, edge, 2, &c2_params);
                    } else if let Some(t) = match (split_u, split_v) {
                        (Some(_), _) => Some(S::zero()),
                        (_, Some(_)) => Some(S::one()),
                        _ => None,
                    } {
                        // C2 at the split point only.
                        emit_jump_rows(rows, lc, ps, edge, 2, &[t]);
                    }
                }
            }
            1 if !edge.on_domain_boundary => emit_zero_edge_rows(rows, lc, ps, edge),
            _ => {}
        }
    }
}

/// Builds the three basis functions of one vertex.
fn build_vertex_functions<S: Real>(
    ps: &PsRefinement<S>,
    xi0: &[Xi0Triplet],
    q: &GrevilleTriangle<S>,
    v: usize,
) -> Result<[SplineFunction<S>; 3], BasisError> {
    let star: BTreeSet<usize> = ps
        .base
        .triangles
        .iter()
        .enumerate()
        .filter(|(_, t)| t.contains(&v))
        .map(|(k, _)| k)
        .collect();
    let micro_ids: Vec<usize> = star.iter().flat_map(|&k| ps.micro_of_base(k)).collect();
    let lc = LocalComplex::build(ps, micro_ids);
    let mut rows = RowSet::new();
    emit_smoothness_rows(&mut rows, &lc, ps, true);
    let mut star_vertices: BTreeSet<usize> = BTreeSet::new();
    for &k in &star {
        star_vertices.extend(ps.base.triangles[k]);
    }
    let mut rhs_rows: Vec<(usize, [S; 3])> = Vec::new();
    for &w in &star_vertices {
        let affine = (w == v).then_some(q);
        emit_ring_rows(&mut rows, &lc, ps, w, affine, &mut rhs_rows);
    }
    for &dof in &dofs_with_carrier_in(ps, xi0, &star) {
        emit_dof_row(&mut rows, &lc, ps, &xi0[dof]);
    }
    let mut overrides: Vec<Vec<(usize, S)>> = vec![Vec::new(); 3];
    for (row, vals) in &rhs_rows {
        for a in 0..3 {
            overrides[a].push((*row, vals[a]));
        }
    }
    let sols = solve_local(&rows, &overrides, lc.ncols, &format!("vertex {v}"))?;
    let mut out: [SplineFunction<S>; 3] = std::array::from_fn(|_| SplineFunction::default());
    for (a, sol) in sols.into_iter().enumerate() {
        out[a] = gather_solution(&lc, &sol);
    }
    Ok(out)
}

/// Builds the quartet of functions of one base edge, as (xi0 index, spline).
fn build_edge_functions<S: Real>(
    ps: &PsRefinement<S>,
    xi0: &[Xi0Triplet],
    e: usize,
) -> Result<Vec<(usize, SplineFunction<S>)>, BasisError> {
    let support: BTreeSet<usize> = ps.base.edge_triangles[e]
        .iter()
        .flatten()
        .copied()
        .collect();
    let micro_ids: Vec<usize> = support.iter().flat_map(|&k| ps.micro_of_base(k)).collect();
    let lc = LocalComplex::build(ps, micro_ids);
    let mut rows = RowSet::new();
    emit_smoothness_rows(&mut rows, &lc, ps, false);
    let mut support_vertices: BTreeSet<usize> = BTreeSet::new();
    for &k in &support {
        support_vertices.extend(ps.base.triangles[k]);
    }
    let mut rhs_rows: Vec<(usize, [S; 3])> = Vec::new();
    for &w in &support_vertices {
        emit_ring_rows(&mut rows, &lc, ps, w, None, &mut rhs_rows);
    }
    let dofs = dofs_with_carrier_in(ps, xi0, &support);
    let mut own_rows = Vec::new();
    for &dof in &dofs {
        let row = emit_dof_row(&mut rows, &lc, ps, &xi0[dof]);
        if xi0[dof].edge == e {
            own_rows.push((dof, row));
        }
    }
    debug_assert_eq!(own_rows.len(), 4);
    let overrides: Vec<Vec<(usize, S)>> = own_rows
        .iter()
        .map(|&(_, row)| vec![(row, S::one())])
        .collect();
    let sols = solve_local(
        &rows,
        &overrides,
        lc.ncols,
        &format!("edge ({}, {})", ps.base.edges[e][0], ps.base.edges[e][1]),
    )?;
    Ok(own_rows
        .iter()
        .map(|&(dof, _)| dof)
        .zip(sols)
        .map(|(dof, sol)| (dof, gather_solution(&lc, &sol)))
        .collect())
}

fn gather_solution<S: Real>(lc: &LocalComplex<S>, sol: &DVector<S>) -> SplineFunction<S> {
    let mut patches = BTreeMap::new();
    for (local, &m) in lc.micro.iter().enumerate() {
        let mut coeffs = [S::zero(); 10];
        for (pos, c) in coeffs.iter_mut().enumerate() {
            *c = sol[lc.cols[local][pos]];
        }
        patches.insert(m, coeffs);
    }
    SplineFunction { patches }
}

/// Builds the complete basis: Greville triangles, vertex triplets, edge
/// quartets, and boundary classification.
pub fn build_basis<S: Real>(ps: PsRefinement<S>) -> Result<SplineBasis<S>, BasisError> {
    let xi0 = build_xi0(&ps);
    let n_v = ps.base.vertices.len();
    let mut greville = Vec::with_capacity(n_v);
    for v in 0..n_v {
        let pts = greville_points(&ps, v);
        greville.push(greville_triangle(&ps, v, &pts)?);
    }
    let mut functions = Vec::with_capacity(3 * n_v + xi0.len());
    for v in 0..n_v {
        let triple = build_vertex_functions(&ps, &xi0, &greville[v], v)?;
        for (a, spline) in triple.into_iter().enumerate() {
            check_nonnegative(&spline, &format!("vertex {v} function {a}"))?;
            functions.push(BasisFunction {
                kind: FunctionKind::Vertex { vertex: v, local: a },
                spline,
            });
        }
    }
    let mut edge_functions: Vec<Option<BasisFunction<S>>> =
        (0..xi0.len()).map(|_| None).collect();
    for e in 0..ps.base.edges.len() {
        for (dof, spline) in build_edge_functions(&ps, &xi0, e)? {
            check_nonnegative(&spline, &format!("edge dof {dof}"))?;
            edge_functions[dof] = Some(BasisFunction {
                kind: FunctionKind::Edge { xi0: dof },
                spline,
            });
        }
    }
    functions.extend(
        edge_functions
            .into_iter()
            .map(|f| f.expect("all quartets built")),
    );
    let splines: Vec<&SplineFunction<S>> = functions.iter().map(|f| &f.spline).collect();
    let boundary_class = classify_boundary(&ps, &splines);
    Ok(SplineBasis {
        ps,
        greville,
        xi0,
        functions,
        boundary_class,
    })
}

fn check_nonnegative<S: Real>(f: &SplineFunction<S>, target: &str) -> Result<(), BasisError> {
    let min = f.min_coeff();
    if min < S::of(-1e-8) * S::one().max(f.max_abs_coeff()) {
        return Err(BasisError::Negative {
            target: target.to_string(),
            min: min.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Boundary flags from coefficient inspection: a function has zero trace
/// when its restriction to every boundary micro-edge vanishes, and zero
/// normal derivative when the cross-edge derivative along every boundary
/// micro-edge also vanishes.
pub fn classify_boundary<S: Real>(
    ps: &PsRefinement<S>,
    functions: &[&SplineFunction<S>],
) -> Vec<BoundaryClass> {
    let mut boundary_edges: Vec<(usize, usize, usize)> = Vec::new();
    for (m, mt) in ps.micro_triangles.iter().enumerate() {
        if ps.base.edge_boundary[mt.base_edge] {
            boundary_edges.push((m, mt.corner, mt.edge_point));
        }
    }
    let tol = S::of(1e-10);
    functions
        .iter()
        .map(|f| {
            let scale = S::one().max(f.max_abs_coeff());
            let mut zero_trace = true;
            let mut zero_normal = true;
            for &(m, u, v) in &boundary_edges {
                let Some(patch) = f.patch(ps, m) else {
                    continue;
                };
                let pu = ps.micro_vertices[u];
                let pv = ps.micro_vertices[v];
                let d = pv - pu;
                let len = d.norm();
                for t in [S::zero(), S::of(1.0 / 3.0), S::of(2.0 / 3.0), S::one()] {
                    let x = Pt::from(pu.coords + d * t);
                    if patch.eval(&x).abs() > tol * scale {
                        zero_trace = false;
                    }
                }
                let n = Vec2::new(-d.y, d.x) / len;
                let dn = patch.derivative_dir(&n);
                for t in [S::zero(), S::of(0.5), S::one()] {
                    let x = Pt::from(pu.coords + d * t);
                    if dn.eval(&x).abs() * len > tol * scale {
                        zero_normal = false;
                    }
                }
            }
            BoundaryClass {
                zero_trace,
                zero_normal_deriv: zero_trace && zero_normal,
            }
        })
        .collect()
}

/// Independent check of the space dimension: assembles all C0/C1 smoothness
/// constraints between adjacent micro-triangles over per-triangle
/// coefficient vectors and returns the numerical nullspace dimension.
/// Singular values below `1e-9` of the largest are treated as zero; a
/// value within a factor ten of the threshold is reported as ambiguous.
pub fn space_dimension_oracle<S: Real>(ps: &PsRefinement<S>) -> Result<usize, BasisError> {
    let n_micro = ps.micro_triangles.len();
    if n_micro > 120 {
        return Err(BasisError::OracleMeshTooLarge(n_micro));
    }
    let ncols = 10 * n_micro;
    let mut edge_map: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
    for (m, mt) in ps.micro_triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (mt.verts[k], mt.verts[(k + 1) % 3]);
            let key = if a < b { [a, b] } else { [b, a] };
            edge_map.entry(key).or_default().push(m);
        }
    }
    let mut rows: Vec<Vec<(usize, S)>> = Vec::new();
    for ([u, v], tris) in edge_map {
        if tris.len() != 2 {
            continue;
        }
        let pu = ps.micro_vertices[u];
        let pv = ps.micro_vertices[v];
        let d = pv - pu;
        let n = Vec2::new(-d.y, d.x) / d.norm();
        for (order, params) in [
            (
                0usize,
                vec![S::zero(), S::of(1.0 / 3.0), S::of(2.0 / 3.0), S::one()],
            ),
            (1usize, vec![S::zero(), S::of(0.5), S::one()]),
        ] {
            for t in params {
                let x = Pt::from(pu.coords + d * t);
                let mut entries = Vec::with_capacity(20);
                for (m, sign) in [(tris[0], S::one()), (tris[1], -S::one())] {
                    let corners = ps.micro_corners(m);
                    let r = probe_row(&corners, |patch| {
                        let mut cur = patch.clone();
                        for _ in 0..order {
                            cur = cur.derivative_dir(&n);
                        }
                        cur.eval(&x)
                    });
                    for (pos, &val) in r.iter().enumerate() {
                        entries.push((10 * m + pos, sign * val));
                    }
                }
                rows.push(entries);
            }
        }
    }
    let mut a = DMatrix::<S>::zeros(rows.len(), ncols);
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            a[(r, c)] += v;
        }
    }
    let svd = a.svd(false, false);
    let smax = svd
        .singular_values
        .iter()
        .fold(S::zero(), |m, &s| m.max(s));
    let threshold = S::of(1e-9) * smax;
    let mut rank = 0usize;
    for &s in svd.singular_values.iter() {
        if s > threshold {
            rank += 1;
        }
        let ratio = if s > threshold {
            s / threshold
        } else if s > S::zero() {
            threshold / s
        } else {
            continue;
        };
        if ratio > S::one() && ratio < S::of(10.0) {
            return Err(BasisError::OracleAmbiguousRank {
                value: s.to_f64_lossy(),
                threshold: threshold.to_f64_lossy(),
            });
        }
    }
    Ok(ncols - rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bb::{poly_to_bb, smoothness_residual, MonomialCubic};
    use crate::mesh::Triangulation;
    use crate::psrefine::{PsRefinement, SplitStrategy};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn single_triangle_basis() -> SplineBasis<f64> {
        let tri = Triangulation::from_parts(
            vec![Pt::new(0.0, 0.0), Pt::new(1.0, 0.0), Pt::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let ps = PsRefinement::build(tri, SplitStrategy::PreferBarycenter).unwrap();
        build_basis(ps).unwrap()
    }

    fn two_triangle_basis() -> SplineBasis<f64> {
        let tri = Triangulation::from_parts(
            vec![
                Pt::new(0.0, 0.0),
                Pt::new(1.0, 0.0),
                Pt::new(1.0, 1.0),
                Pt::new(0.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let ps = PsRefinement::build(tri, SplitStrategy::PreferBarycenter).unwrap();
        build_basis(ps).unwrap()
    }

    #[test]
    fn dimension_is_3nv_plus_4ne() {
        let basis = single_triangle_basis();
        assert_eq!(basis.dim(), 21);
        assert_eq!(basis.num_vertex_functions(), 9);
        assert_eq!(basis.num_edge_functions(), 12);
        let basis2 = two_triangle_basis();
        assert_eq!(basis2.dim(), 3 * 4 + 4 * 5);
    }

    #[test]
    fn partition_of_unity() {
        let basis = two_triangle_basis();
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..200 {
            let p = Pt::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let Some(m) = basis.ps.locate_micro(&p) else {
                continue;
            };
            let sum: f64 = basis
                .functions
                .iter()
                .map(|f| f.spline.eval_in(&basis.ps, m, &p))
                .sum();
            assert!((sum - 1.0).abs() <= 1e-12, "PU violated at {p:?}: {sum}");
        }
    }

    #[test]
    fn nonnegativity_of_coefficients() {
        for basis in [single_triangle_basis(), two_triangle_basis()] {
            for f in &basis.functions {
                assert!(
                    f.spline.min_coeff() >= -1e-10,
                    "negative coefficient {:?}",
                    f.kind
                );
            }
        }
    }

    #[test]
    fn c1_across_every_interior_micro_edge() {
        let basis = two_triangle_basis();
        let ps = &basis.ps;
        // Collect interior micro-edges with their two incident micro-tris.
        let mut edge_map: BTreeMap<[usize; 2], Vec<usize>> = BTreeMap::new();
        for (m, mt) in ps.micro_triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (mt.verts[k], mt.verts[(k + 1) % 3]);
                let key = if a < b { [a, b] } else { [b, a] };
                edge_map.entry(key).or_default().push(m);
            }
        }
        for f in &basis.functions {
            for ([u, v], tris) in &edge_map {
                if tris.len() != 2 {
                    continue;
                }
                let zero = BBPatch::zero(ps.micro_corners(tris[0]));
                let fa = f.spline.patch(ps, tris[0]).unwrap_or_else(|| zero.clone());
                let fb = f
                    .spline
                    .patch(ps, tris[1])
                    .unwrap_or_else(|| BBPatch::zero(ps.micro_corners(tris[1])));
                let pu = ps.micro_vertices[*u];
                let pv = ps.micro_vertices[*v];
                let r = smoothness_residual(&fa, &fb, (&pu, &pv), 1, 9).unwrap();
                assert!(r <= 1e-10, "C1 residual {r} for {:?}", f.kind);
            }
        }
    }

    #[test]
    fn vertex_functions_are_c2_at_split_points_and_super_edges() {
        let basis = two_triangle_basis();
        let ps = &basis.ps;
        let n_v = ps.base.vertices.len();
        let n_e = ps.base.edges.len();
        for f in basis.functions.iter().take(basis.num_vertex_functions()) {
            for (m, mt) in ps.micro_triangles.iter().enumerate() {
                // Edge from edge point to split point: full C2.
                let other = ps
                    .micro_of_base(mt.base_triangle)
                    .find(|&m2| {
                        m2 != m
                            && ps.micro_triangles[m2].edge_point == mt.edge_point
                    })
                    .unwrap();
                let zero = || BBPatch::zero(ps.micro_corners(m));
                let fa = f.spline.patch(ps, m).unwrap_or_else(zero);
                let fb = f
                    .spline
                    .patch(ps, other)
                    .unwrap_or_else(|| BBPatch::zero(ps.micro_corners(other)));
                let pe = ps.micro_vertices[mt.edge_point];
                let psp = ps.micro_vertices[mt.split_point];
                let _ = (n_v, n_e);
                let r = smoothness_residual(&fa, &fb, (&pe, &psp), 2, 9).unwrap();
                assert!(r <= 1e-9, "C2 residual {r} across super edge");
            }
        }
    }

    #[test]
    fn cubic_reproduction_via_dof_coefficients() {
        // A cubic's basis coefficients are its vertex jets against the
        // Greville triangles and the blossoms at the dof arguments; the
        // combination must reproduce the cubic pointwise.
        let basis = two_triangle_basis();
        let ps = &basis.ps;
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..5 {
            let mono = MonomialCubic::<f64>(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
            let mut coeffs = DVector::<f64>::zeros(basis.dim());
            for (i, f) in basis.functions.iter().enumerate() {
                match f.kind {
                    FunctionKind::Vertex { vertex, local } => {
                        let q = &basis.greville[vertex];
                        let pv = ps.base.vertices[vertex];
                        // Blossom of the cubic at (v, v, 3 Q_a - 2 v).
                        let r = 3.0;
                        let arg = Pt::from(
                            q.corners[local].coords * r - pv.coords * 2.0,
                        );
                        let patch = poly_to_bb(&mono, &ps.micro_corners(0));
                        coeffs[i] = patch.blossom(&[pv, pv, arg]);
                    }
                    FunctionKind::Edge { xi0 } => {
                        let (args, carrier) = dof_args(ps, &basis.xi0[xi0]);
                        let patch = poly_to_bb(&mono, &ps.micro_corners(carrier));
                        coeffs[i] = patch.blossom(&args);
                    }
                }
            }
            let s = basis.combine(&coeffs);
            for _ in 0..50 {
                let p = Pt::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
                let Some(m) = ps.locate_micro(&p) else { continue };
                let got = s.eval_in(ps, m, &p);
                let want = mono.eval(&p);
                assert!(
                    (got - want).abs() <= 1e-11 * (1.0 + want.abs()),
                    "cubic reproduction failed: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn dimension_oracle_small_meshes() {
        let tri = Triangulation::from_parts(
            vec![Pt::new(0.0, 0.0), Pt::new(1.0, 0.0), Pt::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let ps = PsRefinement::build(tri, SplitStrategy::PreferBarycenter).unwrap();
        assert_eq!(space_dimension_oracle(&ps).unwrap(), 21);
        let basis2 = two_triangle_basis();
        assert_eq!(space_dimension_oracle(&basis2.ps).unwrap(), 32);
    }

    #[test]
    fn boundary_classification_two_triangles() {
        let basis = two_triangle_basis();
        // Every vertex lies on the boundary of the square, so no vertex
        // function can have zero trace at the corners; the edge functions
        // of the diagonal (interior) edge must all be interior.
        let diag = basis
            .xi0
            .iter()
            .enumerate()
            .filter(|(_, t)| !basis.ps.base.edge_boundary[t.edge])
            .map(|(i, _)| i)
            .collect::<Vec<_>>();
        assert_eq!(diag.len(), 4);
        for i in diag {
            let class = basis.boundary_class[basis.num_vertex_functions() + i];
            assert!(class.zero_trace && class.zero_normal_deriv);
        }
    }
}


/// JSON dump of basis functions for plotting and debugging: one object per
/// function with its kind, owner indices, support micro-triangles, and
/// coefficients in canonical order.
pub fn dump_basis_json<S: Real>(
    basis: &SplineBasis<S>,
    selection: Option<&[usize]>,
) -> serde_json::Value {
    let ids: Vec<usize> = match selection {
        Some(sel) => sel.to_vec(),
        None => (0..basis.functions.len()).collect(),
    };
    let entries: Vec<serde_json::Value> = ids
        .into_iter()
        .map(|i| {
            let f = &basis.functions[i];
            let (kind, owner) = match f.kind {
                FunctionKind::Vertex { vertex, local } => ("vertex", vec![vertex, local]),
                FunctionKind::Edge { xi0 } => {
                    let t = &basis.xi0[xi0];
                    (
                        "edge",
                        vec![
                            t.vertex,
                            t.edge,
                            t.triangle.map_or(usize::MAX, |k| k),
                        ],
                    )
                }
            };
            serde_json::json!({
                "id": i,
                "kind": kind,
                "owner": owner,
                "support": f.spline.patches.keys().collect::<Vec<_>>(),
                "coefficients": f
                    .spline
                    .patches
                    .values()
                    .map(|c| c.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
                "zero_trace": basis.boundary_class[i].zero_trace,
                "zero_normal_derivative": basis.boundary_class[i].zero_normal_deriv,
            })
        })
        .collect();
    serde_json::Value::Array(entries)
}
